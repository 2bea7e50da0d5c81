"""Fitness transitions under standard-bit mutation, and binomial facts.

By symmetry of OneMax, the law of the fitness change ``delta = f(M x) - f(x)``
depends only on ``n`` and the distance ``d = n - f(x)``: if ``a`` of the ``d``
zero-bits and ``b`` of the ``n - d`` one-bits flip, then ``delta = a - b``,
with ``a ~ Bin(d, 1/n)`` and ``b ~ Bin(n - d, 1/n)`` independent.  Everything
here exploits that reduction.

All functions are pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "FitnessState",
    "BinomialSpec",
    "binom_pmf_vector",
    "binom_pmf_cdf",
    "delta_up_bound",
    "delta_zero_exact",
    "delta_pmf_exact",
    "delta_pmf_bruteforce",
    "offspring_fitness_pmf",
    "check_mean_exceedance",
    "check_log1p_bound",
    "find_log1p_threshold",
    "chernoff_bounds",
    "chernoff_check",
    "domination_check",
    "EXACT_N_MAX",
    "BRUTE_FORCE_N_MAX",
]

EXACT_N_MAX = 64
BRUTE_FORCE_N_MAX = 12


@dataclass(frozen=True)
class FitnessState:
    n: int
    d: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be positive")
        if not 0 <= self.d <= self.n:
            raise ValueError(f"distance d={self.d} outside [0, {self.n}]")

    @property
    def fitness(self) -> int:
        return self.n - self.d


@dataclass(frozen=True)
class BinomialSpec:
    m: int
    p: float

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must lie in [0, 1]")

    @property
    def mean(self) -> float:
        return self.m * self.p


def _log_binom(m: int, k: int) -> float:
    return math.lgamma(m + 1) - math.lgamma(k + 1) - math.lgamma(m - k + 1)


def binom_pmf_vector(m: int, p: float) -> np.ndarray:
    """pmf of Bin(m, p) on 0..m, evaluated in log space."""
    k = np.arange(m + 1)
    if p == 0.0:
        out = np.zeros(m + 1)
        out[0] = 1.0
        return out
    if p == 1.0:
        out = np.zeros(m + 1)
        out[m] = 1.0
        return out
    from scipy.special import gammaln

    logc = gammaln(m + 1) - gammaln(k + 1) - gammaln(m - k + 1)
    return np.exp(logc + k * math.log(p) + (m - k) * math.log1p(-p))


def binom_pmf_cdf(spec: BinomialSpec, k: int) -> tuple[float, float]:
    """``(Pr[X = k], Pr[X <= k])`` for X ~ Bin(m, p); cdf is clamped outside [0, m]."""
    m, p = spec.m, spec.p
    if k < 0:
        return 0.0, 0.0
    if k > m:
        return 0.0, 1.0
    pmf = binom_pmf_vector(m, p)
    return float(pmf[k]), min(1.0, math.fsum(pmf[: k + 1]))


def _upper_tail(pmf: np.ndarray, k: int) -> float:
    if k <= 0:
        return 1.0
    if k >= pmf.size:
        return 0.0
    return min(1.0, math.fsum(pmf[k:]))


# ---------------------------------------------------------------------------
# mutation transitions


def delta_up_bound(state: FitnessState, k: int) -> float:
    """Upper bound C(d, k) n^-k on Pr[delta = k] for k >= 1 (0 when k > d)."""
    if k < 1:
        raise ValueError("bound applies to k >= 1")
    if k > state.d:
        return 0.0
    return math.comb(state.d, k) * (1.0 / state.n) ** k


def delta_zero_exact(state: FitnessState) -> float:
    """Exact Pr[delta = 0]: equally many zero- and one-bits flip."""
    n, d = state.n, state.d
    q = 1.0 / n
    lr = math.log1p(-q) if n > 1 else -math.inf
    terms = []
    for k in range(min(d, n - d) + 1):
        logt = _log_binom(d, k) + _log_binom(n - d, k) + 2 * k * math.log(q)
        if n - 2 * k:
            logt += (n - 2 * k) * lr
        terms.append(math.exp(logt))
    return math.fsum(terms)


def delta_pmf_exact(state: FitnessState, max_n: int = EXACT_N_MAX) -> dict[int, float]:
    """Exact law of the fitness change as ``{delta: probability}``."""
    n, d = state.n, state.d
    if n > max_n:
        raise ValueError(f"exact transition law limited to n <= {max_n} (got n={n})")
    q = 1.0 / n
    lq, lr = math.log(q), (math.log1p(-q) if n > 1 else -math.inf)
    buckets: dict[int, list[float]] = {}
    for a in range(d + 1):
        for b in range(n - d + 1):
            rest = n - a - b
            logt = _log_binom(d, a) + _log_binom(n - d, b) + (a + b) * lq
            if rest:
                logt += rest * lr
            buckets.setdefault(a - b, []).append(math.exp(logt))
    return {k: math.fsum(v) for k, v in sorted(buckets.items())}


def delta_pmf_bruteforce(n: int, d: int) -> dict[int, float]:
    """Oracle: enumerate all 2^n flip masks for the string 1^(n-d) 0^d."""
    if n > BRUTE_FORCE_N_MAX:
        raise ValueError(f"brute force limited to n <= {BRUTE_FORCE_N_MAX}")
    masks = np.arange(1 << n, dtype=np.int64)
    bits = (masks[:, None] >> np.arange(n)) & 1
    flips = bits.sum(axis=1)
    x = np.zeros(n, dtype=np.int64)
    x[: n - d] = 1
    child_fitness = (x[None, :] ^ bits).sum(axis=1)
    prob = (1.0 / n) ** flips * (1.0 - 1.0 / n) ** (n - flips)
    delta = child_fitness - (n - d)
    out: dict[int, float] = {}
    for k in np.unique(delta):
        out[int(k)] = math.fsum(prob[delta == k])
    return out


def offspring_fitness_pmf(n: int, f: int, max_n: int = EXACT_N_MAX) -> np.ndarray:
    """pmf over 0..n of the fitness of a mutant of a fitness-``f`` parent."""
    pmf = np.zeros(n + 1)
    for k, p in delta_pmf_exact(FitnessState(n, n - f), max_n).items():
        pmf[f + k] = p
    return pmf


def domination_check(n: int, fx: int, fy: int, tol: float = 1e-12) -> bool:
    """Is the offspring fitness of a fitness-``fy`` parent stochastically larger
    than that of a fitness-``fx`` parent?  Checked on exact survival functions."""
    if fx > fy:
        raise ValueError("need fx <= fy")
    px = offspring_fitness_pmf(n, fx)
    py = offspring_fitness_pmf(n, fy)
    sx = np.cumsum(px[::-1])[::-1]
    sy = np.cumsum(py[::-1])[::-1]
    return bool(np.all(sx <= sy + tol))


# ---------------------------------------------------------------------------
# binomial facts


def _ceil_mean(mp: float) -> int:
    r = round(mp)
    if abs(mp - r) < 1e-9:
        return int(r)
    return math.ceil(mp)


def check_mean_exceedance(spec: BinomialSpec) -> tuple[float, bool]:
    """Exact Pr[X >= E X] and whether it exceeds 1/4 (needs p > 1/m)."""
    if spec.p * spec.m <= 1.0:
        raise ValueError("requires p > 1/m")
    prob = _upper_tail(binom_pmf_vector(spec.m, spec.p), _ceil_mean(spec.mean))
    return prob, prob > 0.25


def check_log1p_bound(spec: BinomialSpec) -> tuple[float, float, bool]:
    """``(E ln(1+X), ln(1+mp) - 11(1-p)/(12 mp), holds)``."""
    m, p = spec.m, spec.p
    mp = spec.mean
    pmf = binom_pmf_vector(m, p)
    expect = math.fsum(pmf * np.log1p(np.arange(m + 1)))
    if mp == 0:
        return expect, -math.inf, True
    bound = math.log1p(mp) - (11.0 / 12.0) * (1.0 - p) / mp
    return expect, bound, expect >= bound - 1e-14


def find_log1p_threshold(max_mean: int = 200, ps=None) -> dict:
    """Grid search for the smallest mean ``mp`` above which the log1p bound holds.

    The grid covers every integer ``m`` with ``1 <= m p <= max_mean`` for each
    ``p`` in ``ps`` (default 0.1, ..., 0.9).  Returns the empirical threshold
    (the smallest grid mean above the largest failing mean) and all failures.
    """
    if ps is None:
        ps = [round(0.1 * i, 1) for i in range(1, 10)]
    points = []
    for p in ps:
        m = max(1, math.ceil(1.0 / p - 1e-12))
        while m * p <= max_mean + 1e-9:
            e, b, ok = check_log1p_bound(BinomialSpec(m, p))
            points.append((m * p, m, p, e, b, ok))
            m += 1
    failures = [pt for pt in points if not pt[5]]
    worst = max((pt[0] for pt in failures), default=0.0)
    above = sorted(pt[0] for pt in points if pt[0] > worst)
    s_min = above[0] if above else math.inf
    return {
        "s_min": s_min,
        "largest_failing_mean": worst,
        "n_points": len(points),
        "failures": [(mp, m, p) for mp, m, p, *_ in failures],
        "holds_above": all(pt[5] for pt in points if pt[0] >= s_min),
    }


def chernoff_bounds(spec: BinomialSpec, delta: float) -> tuple[float, float]:
    """``(exp(-delta^2 mp / 2), exp(-delta^2 mp / 3))``: lower / upper tail bounds."""
    if not 0.0 <= delta <= 1.0:
        raise ValueError("delta must lie in [0, 1]")
    mp = spec.mean
    return math.exp(-delta * delta * mp / 2.0), math.exp(-delta * delta * mp / 3.0)


def chernoff_check(spec: BinomialSpec, delta: float) -> dict:
    """Compare both Chernoff bounds with the exact binomial tails."""
    lo_bound, up_bound = chernoff_bounds(spec, delta)
    pmf = binom_pmf_vector(spec.m, spec.p)
    mp = spec.mean
    # Pr[X <= (1-delta) mp] and Pr[X >= (1+delta) mp], with float-safe rounding
    lo_k = (1 - delta) * mp
    lo_k = int(round(lo_k)) if abs(lo_k - round(lo_k)) < 1e-9 else math.floor(lo_k)
    lower_tail = math.fsum(pmf[: lo_k + 1]) if lo_k >= 0 else 0.0
    upper_tail = _upper_tail(pmf, _ceil_mean((1 + delta) * mp))
    return {
        "lower_tail": lower_tail,
        "lower_bound": lo_bound,
        "upper_tail": upper_tail,
        "upper_bound": up_bound,
        "pass": lower_tail <= lo_bound + 1e-15 and upper_tail <= up_bound + 1e-15,
    }
