"""Population functionals: the exponential potential, top-level statistics,
the h-potential and the "no useful mutation" event N_L.

The exponential potential of a string ``x`` is ``tau**(f(x) - f0)`` when
``f(x) >= f0`` and 0 otherwise, with ``tau = 4e/eps``,
``alpha = 1 - ln(1 + 1/tau)/tau`` and ``f0 = ceil(alpha n)``.  These numbers
overflow floats for realistic ``n``, so potentials are handled as natural
logarithms, with ``-inf`` standing for a zero potential.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .core import GenerationEvent, Individual, Population, offspring_batch, mutate_many, run_generation
from .reports import SIGMA, BoundReport, DriftReport, mean_se, proportion_se
from .rng import as_generator

__all__ = [
    "PotentialParams",
    "LevelSnapshot",
    "Telemetry",
    "TELEMETRY_COLUMNS",
    "g_individual",
    "g_population",
    "g_population_exact",
    "z_process",
    "h_potential",
    "n1_holds",
    "detect_NL",
    "check_offspring_potential",
    "check_live_g_drift",
    "check_g_drift",
    "check_initial_z",
    "check_n1_probability",
]

ZERO = -math.inf

TELEMETRY_COLUMNS = ("generation", "f_top", "x_top", "log_g", "z_is_zero", "h_value", "n1_holds")


@dataclass(frozen=True)
class PotentialParams:
    n: int
    eps: float
    tau: float = field(init=False)
    alpha: float = field(init=False)
    f0: int = field(init=False)

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        tau = 4 * math.e / self.eps
        alpha = 1 - math.log1p(1 / tau) / tau
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "f0", math.ceil(alpha * self.n - 1e-12))

    @property
    def log_tau(self) -> float:
        return math.log(self.tau)

    @property
    def log_target(self) -> float:
        """log of tau**(n - f0), the potential of the optimum."""
        return (self.n - self.f0) * self.log_tau


def _fitness(x) -> np.ndarray:
    if isinstance(x, Population):
        return x.fitness
    if isinstance(x, Individual):
        return np.array([x.fitness])
    return np.atleast_1d(np.asarray(x, dtype=np.int64))


def g_individual(x, params: PotentialParams) -> float:
    """log of the potential of one string (or of a bare fitness value)."""
    f = int(x.fitness) if isinstance(x, Individual) else int(x)
    if f < params.f0:
        return ZERO
    return (f - params.f0) * params.log_tau


def g_population(pop, params: PotentialParams) -> float:
    """log of the summed potential of a population (or fitness array)."""
    f = _fitness(pop)
    f = f[f >= params.f0]
    if f.size == 0:
        return ZERO
    return float(logsumexp((f - params.f0) * params.log_tau))


def g_population_exact(pop, params: PotentialParams, dps: int = 50):
    """High-precision potential (an ``mpmath.mpf``), used as an oracle."""
    import mpmath

    with mpmath.workdps(dps):
        tau = 4 * mpmath.e / mpmath.mpf(params.eps)
        total = mpmath.mpf(0)
        for f in _fitness(pop):
            if f >= params.f0:
                total += tau ** int(f - params.f0)
        return +total


def z_process(pop, params: PotentialParams) -> float:
    """log of max(0, tau**(n - f0) - g(P)); ``-inf`` when the maximum is 0."""
    lg = g_population(pop, params)
    lt = params.log_target
    if lg == ZERO:
        return lt
    if lg >= lt:
        return ZERO
    return lt + math.log1p(-math.exp(lg - lt))


def h_potential(x_top: int, mu: int) -> float:
    """x (ln mu - ln x + 2), with h(0) = 0."""
    if x_top < 0 or x_top > mu:
        raise ValueError(f"x_top={x_top} outside [0, mu={mu}]")
    if x_top == 0:
        return 0.0
    return x_top * (math.log(mu) - math.log(x_top) + 2.0)


@dataclass
class LevelSnapshot:
    generation: int
    f_top: int
    x_top: int
    g_value: float
    h_value: float
    z_value: float

    def __post_init__(self):
        if self.x_top < 1:
            raise ValueError("a population always has at least one member on its top level")


# ---------------------------------------------------------------------------
# N_L


def n1_holds(event: GenerationEvent, f_top: int | None = None) -> bool:
    """Did this generation avoid every mutation that could lift the top level?

    Offspring of parents below the top level must stay below it; offspring of
    top-level parents may reach the top level only as exact copies.
    """
    pf = np.asarray(event.parent_fitness)
    of = np.asarray(event.offspring_fitness)
    cp = np.asarray(event.is_copy)
    if f_top is None:
        f_top = int(pf.max())
    below = pf <= f_top - 1
    if np.any(of[below] >= f_top):
        return False
    top = pf == f_top
    if np.any(of[top] > f_top):
        return False
    return not np.any((of[top] == f_top) & ~cp[top])


def detect_NL(trace, L: int, f_top: int | None = None) -> bool:
    """True iff the first ``L`` generations of ``trace`` all satisfy N_1."""
    trace = list(trace)
    if L < 1:
        raise ValueError("L must be positive")
    if len(trace) < L:
        raise ValueError(f"trace has {len(trace)} generations, need at least L={L}")
    return all(n1_holds(ev, f_top) for ev in trace[:L])


# ---------------------------------------------------------------------------
# telemetry


class Telemetry:
    """Per-generation observer recording the tracked analysis quantities."""

    def __init__(self, mu: int, params: PotentialParams | None = None, trackers=("h",)):
        self.mu = mu
        self.params = params
        self.trackers = set(trackers)
        self.rows: list[dict] = []
        self.levels = None
        if "levels" in self.trackers:
            from .levels import LevelTracker

            self.levels = LevelTracker(mu)

    @classmethod
    def from_config(cls, config, trackers) -> "Telemetry":
        trackers = set(trackers)
        params = None
        if "g" in trackers:
            eps = getattr(config, "epsilon", None)
            if eps is None:
                from .approx import epsilon_gap

                if config.lam >= math.e * config.mu:
                    raise ValueError("the g tracker needs 'epsilon' when lambda >= e mu")
                eps = epsilon_gap(config.mu, config.lam)
            params = PotentialParams(config.n, float(eps))
        return cls(config.mu, params, trackers)

    def _row(self, pop: Population, n1) -> dict:
        row = {"generation": pop.generation, "f_top": pop.f_top, "x_top": pop.x_top,
               "log_g": "", "z_is_zero": "", "h_value": "", "n1_holds": ""}
        if self.params is not None:
            row["log_g"] = g_population(pop, self.params)
            row["z_is_zero"] = int(z_process(pop, self.params) == ZERO)
        if "h" in self.trackers:
            row["h_value"] = h_potential(pop.x_top, self.mu)
        if n1 is not None:
            row["n1_holds"] = int(n1)
        return row

    def start(self, pop: Population):
        self.rows.append(self._row(pop, None))
        if self.levels is not None:
            self.levels.update(pop)

    def __call__(self, old: Population, new: Population, event: GenerationEvent):
        n1 = n1_holds(event, old.f_top) if "n_events" in self.trackers else None
        self.rows.append(self._row(new, n1))
        if self.levels is not None:
            self.levels.update(new)

    @property
    def f_top(self) -> np.ndarray:
        return np.array([r["f_top"] for r in self.rows], dtype=np.int64)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=TELEMETRY_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow({k: (repr(float(v)) if isinstance(v, float) else v) for k, v in r.items()})
        return buf.getvalue()


# ---------------------------------------------------------------------------
# checkers


def _ci(mean, se, z=1.96):
    return mean - z * se, mean + z * se


def check_offspring_potential(n: int, eps: float, fitness: int, samples: int, rng) -> DriftReport:
    """Mean potential of mutants of a fixed parent, against the applicable bound.

    For a parent at or above ``f0`` the ratio ``g(Mx)/g(x)`` is compared with
    ``(1 + eps)/e``; below ``f0``, ``g(Mx)`` itself is compared with 2.
    """
    params = PotentialParams(n, eps)
    g = as_generator(rng)
    bits = np.zeros(n, dtype=bool)
    bits[:fitness] = True
    fit, _ = mutate_many(Individual(bits, fitness), samples, g)
    if fitness >= params.f0:
        vals = np.where(fit >= params.f0, params.tau ** (fit - fitness).astype(float), 0.0)
        bound, quantity = (1 + eps) / math.e, "offspring_potential_ratio"
        hyp = True
    else:
        vals = np.where(fit >= params.f0, params.tau ** (fit - params.f0).astype(float), 0.0)
        bound, quantity = 2.0, "offspring_potential_below_f0"
        # the constant-2 bound is stated for large n only
        hyp = (1 + params.tau / n) ** (n - params.f0) <= 2.0
    m, se = mean_se(vals)
    lo, hi = _ci(m, se)
    return DriftReport(quantity, m, lo, hi, bound, m <= bound + SIGMA * se, hyp, samples,
                       {"n": n, "eps": eps, "parent_fitness": fitness, "f0": params.f0, "tau": params.tau})


def _top_mu_log_g(fit: np.ndarray, mu: int, params: PotentialParams) -> np.ndarray:
    """log potential of the survivors of each row of offspring fitness values."""
    top = -np.sort(-fit, axis=1)[:, :mu]
    expo = np.where(top >= params.f0, (top - params.f0) * params.log_tau, -np.inf)
    return logsumexp(expo, axis=1)


def check_live_g_drift(n: int, mu: int, lam: int, eps: float, generations: int, rng,
                       snapshot_every: int = 100, resamples: int = 200) -> DriftReport:
    """Conditional one-generation potential drift along a live run.

    Every ``snapshot_every`` generations the current population is frozen and
    its next generation resampled ``resamples`` times; each snapshot yields a
    conditional drift estimate with a 95% interval.  The report carries the
    snapshot with the largest estimate; it passes when no snapshot's interval
    lies entirely above ``2 lambda``.
    """
    params = PotentialParams(n, eps)
    g = as_generator(rng)
    pop = Population.random(n, mu, g)
    worst = None
    n_snap = 0
    ok = True
    overflow = False
    for t in range(generations):
        if t % snapshot_every == 0:
            fit, _, _ = offspring_batch(pop, lam, resamples, g)
            lg_next = _top_mu_log_g(fit, mu, params)
            lg_now = g_population(pop, params)
            if max(np.max(lg_next), lg_now) > 700:
                overflow = True
            drift = np.exp(lg_next) - (0.0 if lg_now == ZERO else math.exp(lg_now))
            m, se = mean_se(drift)
            lo, hi = _ci(m, se)
            n_snap += 1
            if lo > 2 * lam:
                ok = False
            if worst is None or m > worst[0]:
                worst = (m, lo, hi)
        pop = run_generation(pop, lam, g)
    hyp = lam <= (1 - eps) * math.e * mu and not overflow
    return DriftReport("g_drift", worst[0], worst[1], worst[2], 2.0 * lam, ok, hyp,
                       n_snap * resamples,
                       {"n": n, "mu": mu, "lam": lam, "eps": eps, "generations": generations,
                        "snapshots": n_snap, "resamples": resamples, "f0": params.f0})


def check_g_drift(n: int, mu: int, lam: int, eps: float, samples: int, rng,
                  generations: int = 10_000) -> list[DriftReport]:
    """Potential drift checks: per-parent bounds above and below ``f0`` and the
    live-run drift bound of ``2 lambda`` per generation."""
    g = as_generator(rng)
    params = PotentialParams(n, eps)
    reports = [
        check_offspring_potential(n, eps, params.f0, samples, g),
        check_offspring_potential(n, eps, max(params.f0 - 5, 0), samples, g),
        check_live_g_drift(n, mu, lam, eps, generations, g),
    ]
    return reports


def check_initial_z(n: int, eps: float, mu: int, seeds: int, rng) -> BoundReport:
    """E[Z_0] >= tau**(n - f0) / 2, compared as ratios to tau**(n - f0)."""
    params = PotentialParams(n, eps)
    g = as_generator(rng)
    ratios = np.empty(seeds)
    for s in range(seeds):
        pop = Population.random(n, mu, g)
        lz = z_process(pop, params)
        ratios[s] = 0.0 if lz == ZERO else math.exp(lz - params.log_target)
    m, se = mean_se(ratios)
    return BoundReport("lemma14", True, {"n": n, "eps": eps, "mu": mu, "f0": params.f0},
                       m, se, 0.5, seeds, kind="lower",
                       notes="values are E[Z_0] / tau^(n-f0)")


def check_n1_probability(n: int, mu: int, lam: int, f_top: int, samples: int, rng,
                         c: float = 0.25) -> BoundReport:
    """Pr(N_1) from a frozen population on the top region vs 1 - e/sqrt(n).

    The population is ``mu`` random strings of fitness ``f_top``; each sample is
    one independently resampled generation.
    """
    g = as_generator(rng)
    pop = Population.at_levels(n, [f_top] * mu, g)
    fit, par, cp = offspring_batch(pop, lam, samples, g)
    pf = pop.fitness[par]
    bad = ((pf < f_top) & (fit >= f_top)) | ((pf == f_top) & ((fit > f_top) | ((fit == f_top) & ~cp)))
    holds = ~bad.any(axis=1)
    p, se = proportion_se(int(holds.sum()), samples)
    hyp = f_top >= n - n ** c + 1
    return BoundReport("lemma19", hyp, {"n": n, "mu": mu, "lam": lam, "f_top": f_top, "c": c},
                       p, se, 1 - math.e / math.sqrt(n), samples, kind="lower")
