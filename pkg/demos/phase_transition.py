"""Success rate of the (mu, lambda) EA on OneMax as lambda crosses e*mu.

Sweeps lambda / (e mu) for a few population sizes at n = 150 and prints the
success rate within 50 n ln n generations, with its 95% Wilson interval.
Below the threshold the population keeps drifting back down; above it the
optimum is found within a few hundred generations.
"""

import math

from commalab.levels import run_threshold_sweep

n = 150
budget = math.ceil(50 * n * math.log(n))
ratios = [0.7, 0.8, 0.9, 1.0, 1.1, 1.2]

surface = run_threshold_sweep(n, [5, 10], ratios, budget, replicates=20, seed=1, jobs=-1)

print(f"n = {n}, budget = {budget} generations")
print(f"{'mu':>4} {'lambda':>7} {'ratio':>6} {'success':>8} {'95% CI':>15} {'mean gens':>10}")
for c in surface.cells:
    print(f"{c.mu:>4} {c.lam:>7} {c.ratio:>6.2f} {c.success_rate:>8.2f} "
          f"[{c.ci_low:.2f}, {c.ci_high:.2f}] {c.mean_generations:>10.1f}")
