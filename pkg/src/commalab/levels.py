"""Current-level bookkeeping for large populations, phase experiments and
the success-rate sweep over (mu, lambda / (e mu)).

A level ``f`` is current while at least ``ceil(mu/4)`` members have fitness
``>= f`` and fewer than ``ceil(mu/2)`` have fitness ``> f``.  The algorithm
*gains* a level when the strictly-above count reaches ``ceil(mu/2)`` and
*loses* it when the at-or-above count falls below ``ceil(mu/4)``; a loss is
treated as a restart from level 0.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed
from scipy.stats import binomtest

from .core import Population, run_generation, run_until
from .reports import BoundReport, mean_se, proportion_se
from .rng import RngStream, as_generator

__all__ = [
    "CurrentLevelState",
    "LevelTracker",
    "PhaseReport",
    "SweepCell",
    "SweepSurface",
    "SWEEP_COLUMNS",
    "gain_threshold",
    "level_status",
    "loss_threshold",
    "large_mu",
    "initial_level",
    "update_level",
    "run_phase1_experiment",
    "run_phase2_experiment",
    "check_stay_bound",
    "run_threshold_sweep",
    "lambda_from_ratio",
]

SWEEP_COLUMNS = ("n", "mu", "lambda", "ratio", "replicates", "successes", "mean_generations",
                 "ci_low", "ci_high", "in_hypothesis")


def gain_threshold(mu: int) -> int:
    return -(-mu // 2)


def loss_threshold(mu: int) -> int:
    return -(-mu // 4)


def large_mu(n: int) -> int:
    """ceil(n^{2/3} ln^4 n), the smallest population size in the large-mu regime."""
    return int(math.ceil(n ** (2 / 3) * math.log(n) ** 4))


@dataclass(frozen=True)
class CurrentLevelState:
    f: int
    t0: int
    x: int
    y: int
    status: str = "active"

    def __post_init__(self):
        if self.status not in ("active", "gained", "lost"):
            raise ValueError(f"unknown status {self.status!r}")


def level_status(x: int, y: int, mu: int) -> str:
    """Classify counts at a level: ``x`` exactly on it, ``y`` strictly above."""
    if x + y < loss_threshold(mu):
        return "lost"
    if y >= gain_threshold(mu):
        return "gained"
    return "active"


def _counts_at(hist_ge: np.ndarray, f: int) -> tuple[int, int]:
    at_or_above = int(hist_ge[f]) if f < hist_ge.size else 0
    above = int(hist_ge[f + 1]) if f + 1 < hist_ge.size else 0
    return at_or_above - above, above


def _tail_counts(pop) -> np.ndarray:
    """Counts of members with fitness >= f, for f = 0..max."""
    fit = np.asarray(pop.fitness if isinstance(pop, Population) else pop, dtype=np.int64)
    return np.cumsum(np.bincount(fit)[::-1])[::-1]


def _anchor(hist_ge: np.ndarray, f: int, mu: int) -> int:
    """Climb from ``f`` while the strictly-above count is at least ceil(mu/2)."""
    need = gain_threshold(mu)
    while f + 1 < hist_ge.size and hist_ge[f + 1] >= need:
        f += 1
    return f


def initial_level(pop, generation: int = 0) -> CurrentLevelState:
    """Start at level 0 and apply any gains the population already supports."""
    hist_ge = _tail_counts(pop)
    mu = int(hist_ge[0])
    f = _anchor(hist_ge, 0, mu)
    x, y = _counts_at(hist_ge, f)
    return CurrentLevelState(f, generation, x, y, "active")


def update_level(state: CurrentLevelState, pop, generation: int | None = None) -> CurrentLevelState:
    """Recompute the counts at the current level and apply gain/loss.

    On a gain the level climbs through every level the population already
    supports.  On a loss the level restarts from 0.
    """
    hist_ge = _tail_counts(pop)
    mu = int(hist_ge[0])
    t = state.t0 if generation is None else generation
    x, y = _counts_at(hist_ge, state.f)
    status = level_status(x, y, mu)
    if status == "lost":
        f = _anchor(hist_ge, 0, mu)
        x, y = _counts_at(hist_ge, f)
        return CurrentLevelState(f, t, x, y, "lost")
    if status == "gained":
        f = _anchor(hist_ge, state.f, mu)
        x, y = _counts_at(hist_ge, f)
        return CurrentLevelState(f, t, x, y, "gained")
    return CurrentLevelState(state.f, state.t0, x, y, "active")


class LevelTracker:
    """Observer that follows the current level along a run."""

    def __init__(self, mu: int):
        self.mu = mu
        self.state: CurrentLevelState | None = None
        self.levels: list[int] = []
        self.gains = 0
        self.restarts: list[int] = []

    def update(self, pop: Population):
        if self.state is None:
            self.state = initial_level(pop, pop.generation)
        else:
            self.state = update_level(self.state, pop, pop.generation)
            if self.state.status == "gained":
                self.gains += 1
            elif self.state.status == "lost":
                self.restarts.append(pop.generation)
        self.levels.append(self.state.f)

    def __call__(self, old, new, event):
        self.update(new)

    def attempt_lengths(self, total: int) -> list[int]:
        """Generations spent in each attempt between restarts; sums to ``total``."""
        cuts = [0, *self.restarts, total]
        return [b - a for a, b in zip(cuts[:-1], cuts[1:])]


# ---------------------------------------------------------------------------
# phase experiments


@dataclass
class PhaseReport:
    phase: str
    parameters: dict
    generations: list
    mean: float
    standard_error: float
    ci_low: float
    ci_high: float
    bound: float | None = None
    losses: int = 0
    loss_rate: float = 0.0
    loss_se: float = 0.0
    loss_bound: float | None = None
    in_hypothesis: bool = True
    censored: int = 0

    @property
    def hypothesis_ok(self) -> bool:
        return self.in_hypothesis

    @property
    def passed(self) -> bool:
        ok = True
        if self.bound is not None:
            ok &= self.mean <= self.bound + 3 * self.standard_error
        if self.loss_bound is not None:
            ok &= self.loss_rate <= self.loss_bound + 3 * self.loss_se
        return bool(ok)

    def to_dict(self) -> dict:
        return {"phase": self.phase, "parameters": self.parameters, "mean": self.mean,
                "standard_error": self.standard_error, "ci_low": self.ci_low, "ci_high": self.ci_high,
                "bound": self.bound, "losses": self.losses, "loss_rate": self.loss_rate,
                "loss_bound": self.loss_bound, "in_hypothesis": self.in_hypothesis,
                "censored": self.censored, "pass": self.passed, "samples": len(self.generations)}


def _require_supercritical(mu, lam):
    if lam < math.e * mu:
        raise ValueError(f"lambda={lam} < e*mu={math.e * mu:.3f}: outside the lambda >= e mu regime")


def _phase1_once(n, mu, lam, g, start, max_generations):
    if start == "zeros":
        pop = Population.at_levels(n, [0] * mu, g)
    else:
        pop = Population.random(n, mu, g)
    tracker = LevelTracker(mu)
    tracker.update(pop)
    for t in range(max_generations):
        if tracker.state.f > n / 3:
            return t, len(tracker.restarts)
        pop = run_generation(pop, lam, g)
        tracker.update(pop)
    return (max_generations if tracker.state.f > n / 3 else -1), len(tracker.restarts)


def run_phase1_experiment(n: int, mu: int, lam: int, replicates: int, rng, start: str = "zeros",
                          max_generations: int | None = None) -> PhaseReport:
    """Generations until the current level exceeds n/3.

    ``start="zeros"`` begins from the all-zeros population (the slowest
    start); ``start="random"`` uses uniform strings, which typically already
    sit above n/3 for moderate n.
    """
    _require_supercritical(mu, lam)
    if max_generations is None:
        max_generations = 100 * n
    g = as_generator(rng)
    gens, censored = [], 0
    for _ in range(replicates):
        t, _ = _phase1_once(n, mu, lam, g, start, max_generations)
        if t < 0:
            censored += 1
            t = max_generations
        gens.append(t)
    m, se = mean_se(gens)
    return PhaseReport("phase1", {"n": n, "mu": mu, "lam": lam, "start": start, "mean_over_n": m / n},
                       gens, m, se, m - 1.96 * se, m + 1.96 * se,
                       in_hypothesis=mu >= large_mu(n), censored=censored)


def _phase2_start(n, mu, f_start, g) -> Population:
    half = gain_threshold(mu)
    return Population.at_levels(n, [f_start] * half + [f_start - 1] * (mu - half), g)


def run_phase2_experiment(n: int, mu: int, lam: int, f_start: int, replicates: int, rng,
                          max_generations: int | None = None) -> PhaseReport:
    """From ceil(mu/2) members at ``f_start`` (rest one level below), run until
    the level at ``f_start`` is gained or lost."""
    _require_supercritical(mu, lam)
    if not n / 3 < f_start < n:
        raise ValueError("f_start must lie in (n/3, n)")
    if max_generations is None:
        max_generations = 100 * n
    g = as_generator(rng)
    gens, losses, censored = [], 0, 0
    for _ in range(replicates):
        pop = _phase2_start(n, mu, f_start, g)
        hist_ge = _tail_counts(pop)
        x, y = _counts_at(hist_ge, f_start)
        state = CurrentLevelState(f_start, 0, x, y)
        outcome, t = None, 0
        while t < max_generations:
            pop = run_generation(pop, lam, g)
            t += 1
            state = update_level(state, pop, t)
            if state.status != "active":
                outcome = state.status
                break
        if outcome == "lost":
            losses += 1
        elif outcome is None:
            censored += 1
        else:
            gens.append(t)
    m, se = mean_se(gens) if gens else (math.nan, math.nan)
    runs = replicates
    lr, lse = proportion_se(losses, runs)
    return PhaseReport("phase2", {"n": n, "mu": mu, "lam": lam, "f_start": f_start},
                       gens, m, se, m - 1.96 * se, m + 1.96 * se,
                       bound=8 * n / (n - f_start), losses=losses, loss_rate=lr, loss_se=lse,
                       loss_bound=10 / n, in_hypothesis=mu >= large_mu(n), censored=censored)


def check_stay_bound(n: int, mu: int, lam: int, t: int, replicates: int, rng,
                     f_start: int | None = None) -> BoundReport:
    """Pr[no level loss within t generations] from X_0 = ceil(mu/2) at a level
    above n/3, against (1 - 2/n^3)^t."""
    _require_supercritical(mu, lam)
    if f_start is None:
        f_start = n // 2 + 1
    g = as_generator(rng)
    kept = 0
    for _ in range(replicates):
        pop = _phase2_start(n, mu, f_start, g)
        state = CurrentLevelState(f_start, 0, *_counts_at(_tail_counts(pop), f_start))
        ok = True
        for s in range(1, t + 1):
            if pop.f_top == n:
                break
            pop = run_generation(pop, lam, g)
            state = update_level(state, pop, s)
            if state.status == "lost":
                ok = False
                break
        kept += ok
    p, se = proportion_se(kept, replicates)
    return BoundReport("lemma28", mu >= large_mu(n),
                       {"n": n, "mu": mu, "lam": lam, "t": t, "f_start": f_start,
                        "h": mu / n ** (2 / 3)},
                       p, se, (1 - 2 / n ** 3) ** t, replicates, kind="lower")


# ---------------------------------------------------------------------------
# sweep


def lambda_from_ratio(mu: int, ratio: float, rounding: str = "floor") -> int:
    """lambda = round(ratio * e * mu) with an explicit rounding mode."""
    x = ratio * math.e * mu
    if rounding == "floor":
        return int(math.floor(x))
    if rounding == "ceil":
        return int(math.ceil(x))
    if rounding == "nearest":
        return int(math.floor(x + 0.5))
    raise ValueError(f"unknown rounding mode {rounding!r}")


def _in_hypothesis(n: int, mu: int, lam: int) -> bool:
    """Is the cell covered by a runtime statement (failure below e mu, success above)?"""
    if lam < math.e * mu:
        return True
    if mu >= large_mu(n):
        return True
    # efficient regime lambda >= (1 + delta) e mu with lambda >= ln n
    return lam >= 1.1 * math.e * mu and lam >= math.log(n)


@dataclass
class _Spec:
    n: int
    mu: int
    lam: int
    budget: int
    count_on_survival: bool = False
    trackers: tuple = ()


@dataclass
class SweepCell:
    n: int
    mu: int
    lam: int
    ratio: float
    replicates: int
    successes: int
    mean_generations: float
    ci_low: float
    ci_high: float
    in_hypothesis: bool
    generations: list = field(default_factory=list, repr=False)

    @property
    def success_rate(self) -> float:
        return self.successes / self.replicates


@dataclass
class SweepSurface:
    cells: list

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for c in self.cells:
            w.writerow([c.n, c.mu, c.lam, repr(float(c.ratio)), c.replicates, c.successes,
                        repr(float(c.mean_generations)), repr(float(c.ci_low)), repr(float(c.ci_high)),
                        int(c.in_hypothesis)])
        return buf.getvalue()

    def cell(self, mu: int, lam: int) -> SweepCell:
        for c in self.cells:
            if c.mu == mu and c.lam == lam:
                return c
        raise KeyError((mu, lam))


def _run_cell(n, mu, lam, ratio, budget, replicates, seed, index):
    spec = _Spec(n, mu, lam, budget)
    base = RngStream(seed, index)
    gens = []
    for r in range(replicates):
        res = run_until(spec, base.child(r))
        if res.success:
            gens.append(res.generations)
    k = len(gens)
    ci = binomtest(k, replicates).proportion_ci(confidence_level=0.95, method="wilson")
    mean = float(np.mean(gens)) if gens else math.nan
    return SweepCell(n, mu, lam, ratio, replicates, k, mean, float(ci.low), float(ci.high),
                     _in_hypothesis(n, mu, lam), gens)


def run_threshold_sweep(n: int, mu_grid, ratio_grid, budget: int, replicates: int, seed: int = 0,
                        rounding: str = "floor", jobs: int | None = 1, lambdas: dict | None = None) -> SweepSurface:
    """Success rate within ``budget`` generations for every (mu, ratio) cell.

    Cell ``i`` (row-major over ``mu_grid`` x ``ratio_grid``) draws from stream
    ``i`` of ``seed`` and replicate ``r`` from its child ``r``, so results do
    not depend on ``jobs``.  ``ci_low``/``ci_high`` are the 95% Wilson
    interval of the success rate.  ``lambdas`` may pin lambda for given
    ``(mu, ratio)`` pairs.
    """
    mu_grid, ratio_grid = list(mu_grid), list(ratio_grid)
    if not mu_grid or not ratio_grid:
        raise ValueError("grids must be non-empty")
    work = []
    for mu in mu_grid:
        for ratio in ratio_grid:
            lam = (lambdas or {}).get((mu, ratio)) or lambda_from_ratio(mu, ratio, rounding)
            if lam < mu:
                raise ValueError(f"lambda={lam} < mu={mu} for ratio {ratio}")
            work.append((mu, lam, ratio))
    tasks = (delayed(_run_cell)(n, mu, lam, ratio, budget, replicates, seed, i)
             for i, (mu, lam, ratio) in enumerate(work))
    cells = Parallel(n_jobs=jobs or -1)(tasks)
    return SweepSurface(list(cells))
