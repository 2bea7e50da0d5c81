"""Reduced Markov chains for the top-level count and drift-theorem bounds.

The plain chain is ``X' = min(mu, Bin(lam, (X + delta_t) / (e mu)))``, with
``delta_t = 0`` unless an influx is configured.  The conditioned chain models
the top level under the event N_1 (no useful mutation this generation) and
uses ``p_n = (1 - 1/n)^n Pr(A | N_1)``.  The phase process compresses an EA
trace into phases of at most ``L`` generations and records the distance to
the optimum (capped at ``n^c``) at each phase start.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .core import Population, evolve, offspring_batch
from .potential import h_potential
from .reports import SIGMA, BoundReport, DriftReport, mean_se, proportion_se
from .rng import as_generator
from .transition import binom_pmf_vector, find_log1p_threshold

__all__ = [
    "BETA",
    "SurrogateConfig",
    "PhaseProcessConfig",
    "PhaseRun",
    "empirical_s_min",
    "s_constant",
    "surrogate_prob",
    "surrogate_step",
    "simulate_chain",
    "check_variation_bound",
    "check_hitting_time",
    "conditioned_p",
    "estimate_pr_a_given_n1",
    "conditioned_chain_step",
    "check_conditioned_mean",
    "h_drift_exact",
    "check_h_drift",
    "phase_process_run",
    "jump_profile",
    "negative_drift_bound",
    "exponential_moment",
    "check_exponential_moment",
    "additive_drift_bound",
]

BETA = 24 * math.e / (math.e - 2)
# 1/eps for the eps = (e - 2) / (36 e) used to pick the drift constant S
_INV_EPS = 36 * math.e / (math.e - 2)


@lru_cache(maxsize=1)
def empirical_s_min() -> float:
    """Smallest grid mean above which the log1p binomial bound always holds."""
    return find_log1p_threshold()["s_min"]


def s_constant(s_min: float | None = None) -> int:
    """max(S_min + 1, ceil(36e/(e - 2)) + 1), with the empirical S_min by default."""
    if s_min is None:
        s_min = empirical_s_min()
    return int(max(math.ceil(s_min) + 1, math.ceil(_INV_EPS) + 1))


# ---------------------------------------------------------------------------
# plain and influx chains


@dataclass
class SurrogateConfig:
    mu: int
    lam: int
    influx: float | list | None = None
    cap: int | None = None

    def __post_init__(self):
        if self.mu < 1 or self.lam < 1:
            raise ValueError("mu and lambda must be positive")
        if self.cap is None:
            self.cap = self.mu
        if self.influx is not None:
            lo = self.delta_min
            if not 0 < lo < self.lam:
                raise ValueError(f"influx minimum {lo} must lie in (0, lambda)")

    def influx_at(self, t: int) -> float:
        if self.influx is None:
            return 0.0
        if np.isscalar(self.influx):
            return float(self.influx)
        seq = self.influx
        return float(seq[min(t, len(seq) - 1)])

    @property
    def delta_min(self) -> float:
        if self.influx is None:
            return 0.0
        if np.isscalar(self.influx):
            return float(self.influx)
        return float(min(self.influx))

    @property
    def supercritical(self) -> bool:
        return self.lam >= math.e * self.mu


def surrogate_prob(state, cfg: SurrogateConfig, t: int = 0):
    """Success probability of the binomial step and whether it was clamped."""
    p = (np.asarray(state, dtype=float) + cfg.influx_at(t)) / (math.e * cfg.mu)
    clamped = bool(np.any(p > 1.0))
    return np.minimum(p, 1.0), clamped


def surrogate_step(state: int, cfg: SurrogateConfig, rng, t: int = 0, flags: list | None = None) -> int:
    """One step of min(cap, Bin(lam, (state + delta_t)/(e mu))).

    A success probability above 1 is clamped; the step index is appended to
    ``flags`` when given.
    """
    if not 0 <= state <= cfg.cap:
        raise ValueError(f"state {state} outside [0, {cfg.cap}]")
    p, clamped = surrogate_prob(state, cfg, t)
    if clamped and flags is not None:
        flags.append(t)
    return int(min(cfg.cap, as_generator(rng).binomial(cfg.lam, float(p))))


def simulate_chain(cfg: SurrogateConfig, x0: int, steps: int, trials: int, rng):
    """``trials`` independent trajectories of length ``steps + 1``.

    Returns ``(paths, clamped_steps)``.
    """
    g = as_generator(rng)
    paths = np.empty((trials, steps + 1), dtype=np.int64)
    paths[:, 0] = x0
    clamped = 0
    for t in range(steps):
        p, c = surrogate_prob(paths[:, t], cfg, t)
        clamped += int(c)
        paths[:, t + 1] = np.minimum(cfg.cap, g.binomial(cfg.lam, p))
    return paths, clamped


def check_variation_bound(cfg: SurrogateConfig, x0: int, delta: float, t: int, trials: int, rng) -> BoundReport:
    """Pr[X_s < X_0 - delta for some s in 1..t] against t X_0 / delta^2."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    plain = SurrogateConfig(cfg.mu, cfg.lam, None, cfg.cap)
    paths, clamped = simulate_chain(plain, x0, t, trials, rng)
    hits = int(np.any(paths[:, 1:] < x0 - delta, axis=1).sum())
    p, se = proportion_se(hits, trials)
    return BoundReport("lemma7", plain.supercritical,
                       {"mu": cfg.mu, "lam": cfg.lam, "x0": x0, "delta": delta, "t": t},
                       p, se, t * x0 / delta ** 2, trials,
                       notes=f"clamped steps: {clamped}" if clamped else "")


def hitting_time_preconditions(cfg: SurrogateConfig, xprime: float) -> list[str]:
    problems = []
    if cfg.influx is None:
        problems.append("an influx is required")
        return problems
    need = max(18 * math.log(2 * cfg.lam / cfg.delta_min), 48)
    if xprime < need:
        problems.append(f"X'={xprime} < max(18 ln(2 lam / delta_min), 48) = {need:.3f}")
    if xprime > cfg.mu / 2:
        problems.append(f"X'={xprime} > mu/2 = {cfg.mu / 2}")
    return problems


def check_hitting_time(cfg: SurrogateConfig, x0: int, xprime: float, trials: int, rng,
                       max_steps: int = 100_000) -> BoundReport:
    """Mean first time with X_t >= X' against max(24, (4X' - 2X_0)/delta_min).

    Raises ``ValueError`` when X' or the influx violate the hypotheses.
    """
    problems = hitting_time_preconditions(cfg, xprime)
    if problems:
        raise ValueError("; ".join(problems))
    g = as_generator(rng)
    x = np.full(trials, x0, dtype=np.int64)
    times = np.full(trials, -1, dtype=np.int64)
    times[x >= xprime] = 0
    clamped = 0
    for t in range(max_steps):
        live = times < 0
        if not live.any():
            break
        p, c = surrogate_prob(x[live], cfg, t)
        clamped += int(c)
        x[live] = np.minimum(cfg.cap, g.binomial(cfg.lam, p))
        newly = live & (x >= xprime)
        times[newly] = t + 1
    censored = int((times < 0).sum())
    times = np.where(times < 0, max_steps, times)
    m, se = mean_se(times)
    bound = max(24.0, (4 * xprime - 2 * x0) / cfg.delta_min)
    notes = []
    if clamped:
        notes.append(f"clamped steps: {clamped}")
    if censored:
        notes.append(f"{censored} trajectories censored at {max_steps}")
    return BoundReport("lemma8", cfg.supercritical,
                       {"mu": cfg.mu, "lam": cfg.lam, "x0": x0, "xprime": xprime, "delta_min": cfg.delta_min},
                       m, se, bound, trials, notes="; ".join(notes))


# ---------------------------------------------------------------------------
# conditioned chain


def conditioned_p(s: int, n: int, mu: int, pr_a: float | None = None) -> float:
    """p_n = (1 - 1/n)^n Pr(A | N_1), by default with Pr(A | N_1) = (s/mu)(1 - e/sqrt(n))."""
    if pr_a is None:
        pr_a = (s / mu) * (1 - math.e / math.sqrt(n))
    return math.exp(n * math.log1p(-1 / n)) * pr_a


def estimate_pr_a_given_n1(n: int, mu: int, lam: int, s: int, samples: int, rng, f_top: int | None = None):
    """Rejection-sampling estimate of Pr(A | N_1) from real EA generations.

    The population has ``s`` members at ``f_top`` and the rest one level
    below.  Generations violating N_1 are rejected; among the rest the first
    phase picks a top-level parent with the estimated probability.
    Returns ``(estimate, standard_error, rejection_rate)``.
    """
    if f_top is None:
        f_top = n - 1
    g = as_generator(rng)
    pop = Population.at_levels(n, [f_top] * s + [f_top - 1] * (mu - s), g)
    fit, par, cp = offspring_batch(pop, lam, samples, g)
    pf = pop.fitness[par]
    bad = ((pf < f_top) & (fit >= f_top)) | ((pf == f_top) & ((fit > f_top) | ((fit == f_top) & ~cp)))
    ok = ~bad.any(axis=1)
    kept = int(ok.sum())
    if kept == 0:
        return math.nan, math.nan, 1.0
    a = pf[ok, 0] == f_top
    p, se = proportion_se(int(a.sum()), kept)
    return p, se, 1 - kept / samples


def conditioned_chain_step(s: int, n: int, mu: int, lam: int, rng, pr_a: float | None = None) -> int:
    """One step of min(Bin(lam, p_n), mu); enforces lam p_n <= s."""
    if not 0 <= s <= mu:
        raise ValueError(f"state {s} outside [0, {mu}]")
    if s == 0:
        return 0
    p = conditioned_p(s, n, mu, pr_a)
    if lam * p > s * (1 + 1e-12):
        raise ValueError(f"lam p_n = {lam * p:.6g} exceeds s = {s}: outside the lambda <= e mu regime")
    return int(min(mu, as_generator(rng).binomial(lam, p)))


def check_conditioned_mean(n: int, mu: int, lam: int, s: int, samples: int, rng) -> BoundReport:
    """Mean next state lies in [s - s ln n / sqrt(n), s] (3 SE slack on both sides)."""
    g = as_generator(rng)
    p = conditioned_p(s, n, mu)
    if lam * p > s:
        raise ValueError("lam p_n exceeds s")
    draws = np.minimum(mu, g.binomial(lam, p, size=samples))
    m, se = mean_se(draws)
    lower = s - s * math.log(n) / math.sqrt(n)
    rep = BoundReport("lemma20", lam <= math.e * mu, {"n": n, "mu": mu, "lam": lam, "s": s},
                      m, se, lower, samples, kind="lower", notes=f"upper end s = {s}")
    rep.passed = rep.passed and m <= s + SIGMA * se
    return rep


def h_drift_exact(s: int, n: int, mu: int, lam: int) -> float:
    """E[h(s) - h(min(B, mu))] with B ~ Bin(lam, p_n(s)), by pmf summation."""
    p = conditioned_p(s, n, mu)
    pmf = binom_pmf_vector(lam, p)
    k = np.minimum(np.arange(lam + 1), mu)
    with np.errstate(divide="ignore", invalid="ignore"):
        hk = np.where(k > 0, k * (math.log(mu) - np.log(np.maximum(k, 1)) + 2.0), 0.0)
    return h_potential(s, mu) - math.fsum(pmf * hk)


def check_h_drift(n: int, mu: int, lam: int, s_const: int | None = None, c: float = 0.1) -> DriftReport:
    """Minimum exact h-drift over s in [S, mu] against 1/beta."""
    S = s_constant() if s_const is None else s_const
    states = range(S, mu + 1)
    drifts = [h_drift_exact(s, n, mu, lam) for s in states]
    if not drifts:
        return DriftReport("h_drift", math.nan, math.nan, math.nan, 1 / BETA, False, False, 0,
                           {"n": n, "mu": mu, "lam": lam, "S": S, "note": "S > mu: no states to check"})
    worst = min(drifts)
    hyp = lam <= math.e * mu and mu <= n ** (0.5 - c)
    return DriftReport("h_drift", worst, worst, worst, 1 / BETA, worst >= 1 / BETA, hyp, len(drifts),
                       {"n": n, "mu": mu, "lam": lam, "S": S, "c": c,
                        "argmin_s": S + int(np.argmin(drifts)), "drift_at_mu": drifts[-1]})


# ---------------------------------------------------------------------------
# phase process


@dataclass
class PhaseProcessConfig:
    n: int
    mu: int
    c: float
    S: int | None = None
    beta: float = BETA
    L: int = field(init=False)
    Lambda: float = field(init=False)
    a: float = 0.0
    b: float = field(init=False)

    def __post_init__(self):
        if not 0 < self.c < 0.5:
            raise ValueError("c must lie in (0, 1/2)")
        if self.S is None:
            self.S = s_constant()
        self.L = int(math.ceil(4 * self.beta * self.mu + 1))
        self.Lambda = self.c * math.log(self.n) - self.S - math.log(40 * self.beta) - 1
        self.b = self.n ** self.c


@dataclass
class PhaseRun:
    phi: np.ndarray
    z: np.ndarray
    y: np.ndarray
    consumed: int
    crossings: np.ndarray = field(repr=False)

    @property
    def lengths(self) -> np.ndarray:
        return np.diff(self.phi)

    @property
    def steps(self) -> np.ndarray:
        """Z_t - Z_{t+1} for consecutive phase starts."""
        return self.z[:-1] - self.z[1:]


def phase_process_run(f_top, cfg: PhaseProcessConfig) -> PhaseRun:
    """Split a top-level trace into phases.

    ``Y_t = min(n - f_top(t), n^c)``.  A phase started at ``phi`` ends at the
    first generation in ``(phi, phi + L]`` where ``Y`` drops below ``Y_phi``
    and otherwise lasts exactly ``L`` generations.  An incomplete final phase
    is not emitted.  ``crossings[i]`` counts generations in phase ``i`` where
    the top level moved from at most its phase-start value to above it.
    """
    f_top = np.asarray(f_top, dtype=np.int64)
    y = np.minimum(cfg.n - f_top, cfg.b).astype(float)
    last = y.size - 1
    phi = [0]
    crossings = []
    cur = 0
    while True:
        end = cur + cfg.L
        window = y[cur + 1: min(end, last) + 1]
        drop = np.flatnonzero(window < y[cur])
        if drop.size:
            nxt = cur + 1 + int(drop[0])
        elif end <= last:
            nxt = end
        else:
            break
        seg = f_top[cur: nxt + 1]
        crossings.append(int(np.count_nonzero((seg[:-1] <= f_top[cur]) & (seg[1:] > f_top[cur]))))
        phi.append(nxt)
        cur = nxt
    phi = np.array(phi, dtype=np.int64)
    return PhaseRun(phi, y[phi], y, int(phi[-1]), np.array(crossings, dtype=np.int64))


def _near_top_population(n: int, mu: int, c: float, rng) -> Population:
    d = max(1, int(math.floor(n ** c)) - 1)
    return Population.at_levels(n, [n - d] * mu, rng)


def _harvest_steps(n, mu, lam, cfg: PhaseProcessConfig, runs, phases, rng):
    """Phase steps (Z_t, Z_{t+1}) from live runs started inside (a, b)."""
    g = as_generator(rng)
    pairs = []
    for _ in range(runs):
        pop = _near_top_population(n, mu, cfg.c, g)
        _, ftop, _ = evolve(pop, lam, phases * cfg.L, g)
        run = phase_process_run(ftop, cfg)
        pairs.append(np.column_stack([run.z[:-1], run.z[1:]]))
    return np.concatenate(pairs) if pairs else np.empty((0, 2))


def jump_profile(n: int, mu: int, lam: int, cfg: PhaseProcessConfig, runs: int, phases: int, rng,
                 kmax: int = 3) -> list[BoundReport]:
    """Empirical Pr(Z_t - Z_{t+1} = k | Z_t < b) against L lam n^{-k(1-c)}/k!."""
    pairs = _harvest_steps(n, mu, lam, cfg, runs, phases, rng)
    cond = pairs[pairs[:, 0] < cfg.b]
    total = cond.shape[0]
    out = []
    for k in range(1, kmax + 1):
        hits = int(np.count_nonzero(np.isclose(cond[:, 0] - cond[:, 1], k)))
        p, se = proportion_se(hits, total)
        bound = cfg.L * lam * n ** (-k * (1 - cfg.c)) / math.factorial(k)
        out.append(BoundReport("lemma24", lam <= math.e * mu,
                               {"n": n, "mu": mu, "lam": lam, "k": k, "L": cfg.L, "c": cfg.c},
                               p, se, bound, total))
    return out


# ---------------------------------------------------------------------------
# drift-theorem evaluators


def negative_drift_bound(Lambda: float, p: float, D: float, Lwindow: float, a: float, b: float) -> float:
    """min(1, L D p exp(-Lambda (b - a)))."""
    if not Lambda > 0:
        raise ValueError("Lambda must be positive")
    if p < 1:
        raise ValueError("p must be >= 1")
    if b < a:
        raise ValueError("need b >= a")
    val = Lwindow * D * p * math.exp(-Lambda * (b - a))
    return float(min(1.0, max(0.0, val)))


def additive_drift_bound(x0: float, delta: float, direction: str = "upper") -> float:
    """E[X_0] / delta, an upper (drift >= delta) or lower (drift <= delta) bound on E[T]."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    if direction not in ("upper", "lower"):
        raise ValueError("direction must be 'upper' or 'lower'")
    return x0 / delta


def exponential_moment(steps, Lambda: float) -> dict:
    """E[exp(Lambda (Z_t - Z_{t+1}))] over an empirical step sample, split by sign."""
    steps = np.asarray(steps, dtype=float)
    if steps.size == 0:
        return {"moment": math.nan, "sigma_minus": math.nan, "sigma_zero": math.nan,
                "sigma_plus": math.nan, "standard_error": math.nan}
    w = np.exp(Lambda * steps)
    size = steps.size
    parts = {
        "sigma_minus": math.fsum(w[steps < 0]) / size,
        "sigma_zero": math.fsum(w[steps == 0]) / size,
        "sigma_plus": math.fsum(w[steps > 0]) / size,
    }
    m, se = mean_se(w)
    return {"moment": m, "standard_error": se, **parts}


def check_exponential_moment(n: int, mu: int, lam: int, cfg: PhaseProcessConfig, trials: int, rng,
                             phases: int = 20, Lambda: float | None = None) -> list[BoundReport]:
    """Conditional exponential moment of phase steps, plus the top-level-loss
    probability within ``L`` generations from near the top.

    ``Lambda`` overrides the configured value for the moment estimate; the
    comparison is in hypothesis only when the configured Lambda is positive.
    """
    g = as_generator(rng)
    lam_used = cfg.Lambda if Lambda is None else Lambda
    pairs = _harvest_steps(n, mu, lam, cfg, trials, phases, g)
    inside = pairs[(pairs[:, 0] > cfg.a) & (pairs[:, 0] < cfg.b)]
    mom = exponential_moment(inside[:, 0] - inside[:, 1], lam_used)
    bound = 1 - math.exp(-cfg.S) / 12
    hyp = cfg.Lambda > 0 and lam <= math.e * mu
    notes = f"Lambda used {lam_used:.6g}; configured {cfg.Lambda:.6g}"
    if inside.shape[0] == 0:
        notes += "; no conditioned samples"
    moment = BoundReport("lemma25", hyp,
                         {"n": n, "mu": mu, "lam": lam, "c": cfg.c, "S": cfg.S, "L": cfg.L,
                          "Lambda": lam_used, "sigma_minus": mom["sigma_minus"],
                          "sigma_zero": mom["sigma_zero"], "sigma_plus": mom["sigma_plus"]},
                         mom["moment"], mom["standard_error"], bound, int(inside.shape[0]), notes=notes)

    lost = 0
    for _ in range(trials):
        pop = _near_top_population(n, mu, cfg.c, g)
        _, ftop, _ = evolve(pop, lam, cfg.L, g)
        lost += int(np.any(ftop[1:] < ftop[0]))
    p, se = proportion_se(lost, trials)
    floor = math.exp(-cfg.S) / 4
    feasible = floor > SIGMA * max(se, 1 / trials)
    loss = BoundReport("cor23", lam <= math.e * mu,
                       {"n": n, "mu": mu, "lam": lam, "L": cfg.L, "S": cfg.S, "feasible": feasible},
                       p, se, floor, trials, kind="lower",
                       notes="" if feasible else "bound below Monte Carlo resolution at this S")
    return [moment, loss]
