"""Registry of numeric checks, one entry per identifier accepted in a checker
suite.  Each check returns a list of report objects exposing ``passed``,
``hypothesis_ok`` and ``to_dict()``.

Default parameters are sized to finish in seconds to a few minutes; the
``samples`` argument scales the Monte Carlo effort where it applies.
"""

from __future__ import annotations

import math

import numpy as np
from joblib import Parallel, delayed

from . import approx, levels, potential, surrogate, transition
from .config import KNOWN_CHECKS, CheckerSuiteConfig
from .reports import SIGMA, BoundReport
from .rng import RngStream

__all__ = ["CHECKS", "domination_failures", "run_check", "run_suite", "suite_passed", "mean_exceedance_failures",
           "LEMMA7_SETS", "LEMMA8_SETS"]

# (mu, lambda, X_0, Delta, t)
LEMMA7_SETS = [
    (100, 272, 50, 30, 5),
    (1000, 2719, 500, 100, 10),
    (100, 272, 100, 20, 10),
    (200, 544, 100, 40, 20),
    (50, 136, 25, 10, 3),
    (500, 1360, 250, 60, 8),
]

# (mu, lambda, delta_min, X_0, X')
LEMMA8_SETS = [
    (2000, 5437, 50, 0, 100),
    (2000, 5437, 5, 0, 140),
    (2000, 5437, 20, 0, 120),
    (2000, 5437, 20, 50, 120),
]


def _exact(name, worst, tol, samples, params, kind="upper", bound=None):
    return BoundReport(name, True, params, worst, 0.0, tol if bound is None else bound, samples, kind=kind)


def check_lemma1(rng=None, samples=None, n_max=transition.BRUTE_FORCE_N_MAX):
    worst, count = -math.inf, 0
    for n in range(1, n_max + 1):
        for d in range(n + 1):
            pmf = transition.delta_pmf_bruteforce(n, d)
            for k in range(1, d + 1):
                excess = pmf.get(k, 0.0) - transition.delta_up_bound(transition.FitnessState(n, d), k)
                worst = max(worst, excess)
                count += 1
    return [_exact("lemma1", worst, 1e-15, count, {"n_max": n_max, "quantity": "max(exact - bound)"})]


def check_lemma2(rng=None, samples=None, n_max=transition.BRUTE_FORCE_N_MAX):
    worst_zero, worst_pmf, count = 0.0, 0.0, 0
    for n in range(1, n_max + 1):
        for d in range(n + 1):
            st = transition.FitnessState(n, d)
            brute = transition.delta_pmf_bruteforce(n, d)
            exact = transition.delta_pmf_exact(st)
            worst_zero = max(worst_zero, abs(transition.delta_zero_exact(st) - brute[0]))
            for k in set(brute) | set(exact):
                worst_pmf = max(worst_pmf, abs(brute.get(k, 0.0) - exact.get(k, 0.0)))
            count += 1
    return [
        _exact("lemma2", worst_zero, 1e-12, count, {"n_max": n_max, "quantity": "max |P(delta=0) - oracle|"}),
        _exact("delta_pmf", worst_pmf, 1e-12, count, {"n_max": n_max, "quantity": "max |pmf - oracle|"}),
    ]


def domination_failures(n_lo: int, n_hi: int) -> tuple[list, int]:
    """Fitness pairs (n, fx, fy) with fx <= fy whose offspring laws are not ordered."""
    fails, pairs = [], 0
    for n in range(n_lo, n_hi + 1):
        for fy in range(n + 1):
            for fx in range(fy + 1):
                pairs += 1
                if not transition.domination_check(n, fx, fy):
                    fails.append((n, fx, fy))
    return fails, pairs


def check_lemma3(rng=None, samples=None, n_max=transition.BRUTE_FORCE_N_MAX):
    # at n = 1 every bit flips with probability 1 > 1/2 and the order reverses
    out = []
    for lo, hi, hyp in ((2, n_max, True), (1, 1, False)):
        fails, pairs = domination_failures(lo, hi)
        out.append(BoundReport("lemma3", hyp, {"n": f"{lo}..{hi}", "quantity": "failing pairs",
                                               "failures": fails},
                               len(fails), 0.0, 0, pairs,
                               notes="" if hyp else "flip rate 1/n = 1 exceeds 1/2"))
    return out


def mean_exceedance_failures(m_max: int = 60) -> tuple[int, int]:
    fails, total = 0, 0
    for m in range(2, m_max + 1):
        for i in range(1, 101):
            p = i / 100
            if p * m <= 1:
                continue
            total += 1
            _, ok = transition.check_mean_exceedance(transition.BinomialSpec(m, p))
            fails += not ok
    return fails, total


def check_thm5(rng=None, samples=None):
    fails, total = mean_exceedance_failures()
    return [_exact("thm5", fails, 0, total, {"m": "2..60", "p": "(1/m, 1] step 0.01", "quantity": "failures"})]


def check_thm6(rng=None, samples=None):
    res = transition.find_log1p_threshold()
    rep = BoundReport("thm6", True, {"grid": "mp in [1, 200], p in 0.1..0.9", "s_min": res["s_min"],
                                     "largest_failing_mean": res["largest_failing_mean"],
                                     "failures": len(res["failures"])},
                      0.0 if res["holds_above"] else 1.0, 0.0, 0.0, res["n_points"],
                      notes="empirical value is 1 if the bound fails anywhere above s_min")
    return [rep]


def check_chernoff(rng=None, samples=None):
    worst, count = -math.inf, 0
    for m in (10, 50, 100, 200):
        for p in (0.05, 0.1, 0.2, 0.5, 0.8):
            for delta in np.linspace(0, 1, 11):
                r = transition.chernoff_check(transition.BinomialSpec(m, p), float(delta))
                worst = max(worst, r["lower_tail"] - r["lower_bound"], r["upper_tail"] - r["upper_bound"])
                count += 1
    return [_exact("chernoff", worst, 1e-15, count, {"quantity": "max(exact tail - bound)"})]


def check_lemma6(rng, samples=None):
    return [potential.check_live_g_drift(100, 25, 54, 0.2, samples or 10_000, rng)]


def check_thm12(rng, samples=None):
    p = potential.PotentialParams(100, 0.2)
    return [potential.check_offspring_potential(100, 0.2, p.f0, samples or 100_000, rng)]


def check_lemma13(rng, samples=None):
    p = potential.PotentialParams(100, 0.2)
    return [potential.check_offspring_potential(100, 0.2, p.f0 - 5, samples or 100_000, rng)]


def check_lemma14(rng, samples=None):
    return [potential.check_initial_z(20, 0.5, 10, samples or 1000, rng)]


def check_lemma7(rng, samples=None):
    return [surrogate.check_variation_bound(surrogate.SurrogateConfig(mu, lam), x0, d, t, samples or 10_000, rng)
            for mu, lam, x0, d, t in LEMMA7_SETS]


def check_lemma8(rng, samples=None):
    return [surrogate.check_hitting_time(surrogate.SurrogateConfig(mu, lam, dmin), x0, xp, samples or 1000, rng)
            for mu, lam, dmin, x0, xp in LEMMA8_SETS]


def check_lemma19(rng, samples=None):
    return [potential.check_n1_probability(400, 5, 5, 398, samples or 100_000, rng)]


def check_lemma20(rng, samples=None):
    n = 10 ** 4
    mu = int(n ** 0.4)
    return [surrogate.check_conditioned_mean(n, mu, int(math.e * mu), mu, samples or 100_000, rng)]


def check_thm21(rng=None, samples=None):
    n = 10 ** 6
    mu = int(n ** 0.4)
    return [surrogate.check_h_drift(n, mu, int(math.e * mu))]


def _phase_cfg(n=400, mu=5):
    return surrogate.PhaseProcessConfig(n, mu, 0.25)


def check_lemma24(rng, samples=None):
    n, mu, lam = 400, 5, 13
    return surrogate.jump_profile(n, mu, lam, _phase_cfg(n, mu), samples or 20, 5, rng)


def check_lemma25(rng, samples=None):
    n, mu, lam = 400, 5, 13
    return surrogate.check_exponential_moment(n, mu, lam, _phase_cfg(n, mu), samples or 20, rng,
                                              phases=5, Lambda=1.0)[:1]


def check_cor23(rng, samples=None):
    n, mu, lam = 400, 5, 13
    return surrogate.check_exponential_moment(n, mu, lam, _phase_cfg(n, mu), samples or 200, rng,
                                              phases=1, Lambda=1.0)[1:]


def check_lemma27(rng, samples=None):
    reps = samples or 20
    means = {n: levels.run_phase1_experiment(n, 64, 174, reps, rng).mean / n for n in (50, 100, 200)}
    spread = max(means.values()) / min(means.values())
    return [BoundReport("lemma27", False, {"mu": 64, "lam": 174, "mean_over_n": means,
                                           "quantity": "max/min of mean phase-1 generations / n"},
                        spread, 0.0, 2.0, 3 * reps)]


def _large_mu_cell(n=30):
    mu = levels.large_mu(n)
    return n, mu, int(math.ceil(math.e * mu))


def check_lemma28(rng, samples=None):
    n, mu, lam = _large_mu_cell()
    return [levels.check_stay_bound(n, mu, lam, 200, samples or 50, rng)]


def check_lemma29(rng, samples=None):
    n, mu, lam = _large_mu_cell()
    return [levels.run_phase2_experiment(n, mu, lam, n - 1, samples or 200, rng)]


def check_approx(rng=None, samples=None):
    terms = approx.e_continued_fraction(20)
    expanded = approx.continued_fraction_expand(approx.E, 20)
    conv = approx.convergents(terms)
    bad = sum(not (c.error() < approx._ctx.mpf(1) / c.q ** 2) for c in conv)
    scan = approx.gap_bound_scan(10 ** 4, 2.25)
    return [
        _exact("e_continued_fraction", int(terms != expanded), 0, 20, {"k": 20}),
        _exact("convergents", bad, 0, len(conv), {"quantity": "convergents with |e - p/q| >= 1/q^2"}),
        BoundReport("gap_scan", True, {"mu_max": 10 ** 4, "d": 2.25, "minimum": scan.minimum,
                                       "argmin": scan.argmin, "exceptions": scan.exceptions},
                    float(len(scan.exceptions)), 0.0, float(len(scan.exceptions)), 10 ** 4,
                    notes="exceptions are listed, not asserted absent"),
    ]


CHECKS = {
    "lemma1": check_lemma1,
    "lemma2": check_lemma2,
    "lemma3": check_lemma3,
    "thm5": check_thm5,
    "thm6": check_thm6,
    "chernoff": check_chernoff,
    "lemma6": check_lemma6,
    "thm12": check_thm12,
    "lemma13": check_lemma13,
    "lemma14": check_lemma14,
    "lemma7": check_lemma7,
    "lemma8": check_lemma8,
    "lemma19": check_lemma19,
    "lemma20": check_lemma20,
    "thm21": check_thm21,
    "lemma24": check_lemma24,
    "lemma25": check_lemma25,
    "cor23": check_cor23,
    "lemma27": check_lemma27,
    "lemma28": check_lemma28,
    "lemma29": check_lemma29,
    "approx": check_approx,
}
assert set(CHECKS) == set(KNOWN_CHECKS)


def run_check(name: str, seed: int = 0, samples: int | None = None, sigma: float = SIGMA) -> list:
    """Run one check on its own stream (stable under suite composition)."""
    stream = RngStream(seed, KNOWN_CHECKS.index(name))
    reports = CHECKS[name](stream.generator, samples)
    if sigma != SIGMA:
        for r in reports:
            if isinstance(r, BoundReport):
                r.rescore(sigma)
    return reports


def run_suite(cfg: CheckerSuiteConfig, seed: int | None = None, jobs: int | None = None) -> dict:
    seed = cfg.seed if seed is None else seed
    jobs = jobs or cfg.jobs or 1
    results = Parallel(n_jobs=jobs)(
        delayed(run_check)(name, seed, cfg.samples.get(name), cfg.tolerance_sigma) for name in cfg.suite)
    return dict(zip(cfg.suite, results))


def suite_passed(results: dict) -> bool:
    """True iff every in-hypothesis report passed."""
    return all(r.passed for reps in results.values() for r in reps if r.hypothesis_ok)
