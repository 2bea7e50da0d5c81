"""The binomial chain that models how many parents sit on the top level.

Each step draws X' = min(mu, Bin(lambda, X / (e mu))).  With lambda above
e*mu the chain drifts up to the cap; below it, it dies out.
"""

import numpy as np

from commalab.rng import RngStream
from commalab.surrogate import SurrogateConfig, simulate_chain

mu = 100
for lam in (220, 272, 300):
    paths, _ = simulate_chain(SurrogateConfig(mu, lam), x0=20, steps=60, trials=2000, rng=RngStream(lam))
    final = paths[:, -1]
    print(f"lambda={lam}: mean X_60 = {final.mean():6.1f}, extinct = {np.mean(final == 0):.2f}")
