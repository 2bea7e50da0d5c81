"""How close can lambda / mu get to e?

Prints the first convergents of e and the population sizes mu <= 10^4 for
which the best integer lambda lands within mu^(-2.25) of e*mu (relative gap).
"""

from commalab.approx import convergents, e_continued_fraction, gap_bound_scan

terms = e_continued_fraction(12)
print("partial quotients:", terms)
for c in convergents(terms):
    print(f"  {c.p:>7}/{c.q:<6} |e - p/q| = {float(c.error()):.3e}")

scan = gap_bound_scan(10_000, 2.25)
print(f"\nmu with mu^2.25 * gap < 1: {scan.exceptions}")
print(f"smallest mu^2.25 * gap: {scan.minimum:.4f} at mu = {scan.argmin}")
