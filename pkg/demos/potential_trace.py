"""Trace the potentials of a single run.

Runs the EA with telemetry and prints the top fitness level, how many
parents share it, the log potential g and the level potential h every few
hundred generations.  The potential g only counts parents at or above the
level f0, which sits within a few bits of the optimum, so log g stays at -inf
until the very end of the run.
"""

from commalab.config import ExperimentConfig
from commalab.core import run_until
from commalab.rng import RngStream

cfg = ExperimentConfig(n=200, mu=10, lam=27, seed=3, budget=20_000, trackers=frozenset({"g", "h"}),
                       epsilon=0.9)
res = run_until(cfg, RngStream(cfg.seed))
rows = res.telemetry.rows

print(f"success={res.success} generations={res.generations} evaluations={res.evaluations}")
print(f"f0 = {res.telemetry.params.f0}")
step = max(1, len(rows) // 15)
for r in rows[:-6:step] + rows[-6:]:
    print(f"t={r['generation']:>6}  f_top={r['f_top']:>4}  x_top={r['x_top']:>3}  "
          f"log_g={r['log_g']:>9.3f}  h={r['h_value']:>7.3f}")
