import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from commalab.potential import h_potential
from commalab.rng import RngStream
from commalab.surrogate import (BETA, PhaseProcessConfig, SurrogateConfig, additive_drift_bound, check_conditioned_mean,
                                check_exponential_moment, check_h_drift, check_hitting_time, check_variation_bound,
                                conditioned_chain_step, conditioned_p, estimate_pr_a_given_n1, exponential_moment,
                                h_drift_exact, hitting_time_preconditions, jump_profile, negative_drift_bound,
                                phase_process_run, s_constant, simulate_chain, surrogate_step)
from commalab.transition import binom_pmf_vector


def test_beta_constant():
    assert BETA == 24 * math.e / (math.e - 2)
    assert BETA == pytest.approx(90.8261, abs=1e-4)


def test_s_constant_construction():
    assert s_constant(1.0) == math.ceil(36 * math.e / (math.e - 2)) + 1 == 138
    assert s_constant(500.0) == 501
    assert s_constant() == 138


# --- plain / influx chain -----------------------------------------------------


def test_zero_is_absorbing():
    cfg = SurrogateConfig(10, 30)
    g = RngStream(0).generator
    assert all(surrogate_step(0, cfg, g) == 0 for _ in range(100))


def test_step_mean_matches_binomial():
    cfg = SurrogateConfig(100, 272)
    paths, _ = simulate_chain(cfg, 50, 1, 10**6, RngStream(1))
    nxt = paths[:, 1]
    expect = 272 * 50 / (math.e * 100)
    assert expect == pytest.approx(50.03, abs=0.01)
    assert abs(nxt.mean() - expect) < 3 * nxt.std() / math.sqrt(nxt.size)


@pytest.mark.parametrize("mu", [3, 7, 20, 50])
def test_chain_at_threshold_is_martingale_below_cap(mu):
    lam = math.floor(math.e * mu)
    for s in range(1, mu + 1):
        p = s / (math.e * mu)
        pmf = binom_pmf_vector(lam, p)
        k = np.arange(lam + 1)
        uncapped = float(pmf @ k)
        capped = float(pmf @ np.minimum(k, mu))
        assert uncapped == pytest.approx(lam * s / (math.e * mu), rel=1e-12)
        assert uncapped <= s + 1e-12
        assert capped <= uncapped + 1e-12


def test_clamp_is_flagged():
    cfg = SurrogateConfig(5, 20, influx=14.0)
    flags = []
    surrogate_step(5, cfg, RngStream(2), t=3, flags=flags)
    assert flags == [3]
    _, clamped = simulate_chain(cfg, 5, 4, 10, RngStream(2))
    assert clamped == 4


def test_config_validation():
    with pytest.raises(ValueError):
        SurrogateConfig(10, 27, influx=0.0)
    with pytest.raises(ValueError):
        SurrogateConfig(10, 27, influx=[3.0, 0.0, 2.0])
    assert SurrogateConfig(10, 27, influx=[5.0, 2.0]).delta_min == 2.0
    with pytest.raises(ValueError):
        surrogate_step(11, SurrogateConfig(10, 30), RngStream(0))


def test_variation_bound_example_sets():
    rep = check_variation_bound(SurrogateConfig(100, 272), 50, 30, 5, 10_000, RngStream(3))
    assert rep.bound == pytest.approx(0.2778, abs=1e-4)
    assert rep.hypothesis_ok and rep.passed
    rep = check_variation_bound(SurrogateConfig(1000, 2719), 500, 100, 10, 10_000, RngStream(4))
    assert rep.bound == pytest.approx(0.5)
    assert rep.passed


def test_variation_bound_vacuous_when_delta_exceeds_start():
    rep = check_variation_bound(SurrogateConfig(20, 55), 20, 25, 2, 1000, RngStream(5))
    assert rep.empirical == 0.0 and rep.passed


def test_hitting_time_example():
    cfg = SurrogateConfig(2000, 5437, influx=50.0)
    rep = check_hitting_time(cfg, 0, 100, 1000, RngStream(6))
    assert rep.bound == 24.0
    assert rep.hypothesis_ok and rep.passed


def test_hitting_time_start_above_target():
    cfg = SurrogateConfig(2000, 5437, influx=50.0)
    rep = check_hitting_time(cfg, 150, 100, 100, RngStream(7))
    assert rep.empirical == 0.0 and rep.passed


def test_hitting_time_rejects_violated_preconditions():
    cfg = SurrogateConfig(2000, 5437, influx=5.0)
    assert hitting_time_preconditions(cfg, 100)
    with pytest.raises(ValueError):
        check_hitting_time(cfg, 0, 100, 10, RngStream(8))
    with pytest.raises(ValueError):
        check_hitting_time(SurrogateConfig(100, 272, influx=5.0), 0, 60, 10, RngStream(8))
    with pytest.raises(ValueError):
        check_hitting_time(SurrogateConfig(2000, 5437), 0, 100, 10, RngStream(8))


# --- conditioned chain ----------------------------------------------------------


def test_conditioned_chain_basics():
    g = RngStream(9).generator
    assert conditioned_chain_step(0, 10**4, 39, 106, g) == 0
    for s in range(1, 40):
        assert 0 <= conditioned_chain_step(s, 10**4, 39, 106, g) <= 39
        assert 106 * conditioned_p(s, 10**4, 39) <= s
    with pytest.raises(ValueError):
        conditioned_chain_step(5, 10**4, 39, 200, g, pr_a=1.0)


def test_conditioned_mean_within_window():
    n = 10**4
    mu = int(n ** 0.4)
    rep = check_conditioned_mean(n, mu, int(math.e * mu), mu, 100_000, RngStream(10))
    assert rep.hypothesis_ok and rep.passed


def test_empirical_pr_a_close_to_top_fraction():
    p, se, rej = estimate_pr_a_given_n1(400, 10, 27, 4, 20_000, RngStream(11))
    assert 0 <= rej < 0.5
    assert abs(p - 0.4) < 4 * se + 0.05


def test_h_drift_positive_at_mu():
    n = 10**6
    mu = int(n ** 0.4)
    assert h_drift_exact(mu, n, mu, int(math.e * mu)) > 0


def test_h_drift_exact_matches_monte_carlo():
    n, mu, lam, s = 10**4, 39, 106, 30
    g = RngStream(12).generator
    p = conditioned_p(s, n, mu)
    nxt = np.minimum(mu, g.binomial(lam, p, size=200_000))
    hs = np.array([h_potential(int(k), mu) for k in range(mu + 1)])
    vals = h_potential(s, mu) - hs[nxt]
    assert abs(vals.mean() - h_drift_exact(s, n, mu, lam)) < 4 * vals.std() / math.sqrt(vals.size)


def test_h_drift_check():
    n = 10**6
    mu = int(n ** 0.4)
    rep = check_h_drift(n, mu, int(math.e * mu))
    assert rep.hypothesis_ok and rep.passed
    assert rep.estimate >= 1 / BETA


# --- phase process --------------------------------------------------------------


def small_cfg(n=10**4, mu=1, c=0.25, S=1):
    cfg = PhaseProcessConfig(n, mu, c, S=S)
    return cfg


def test_phase_config_formulas():
    cfg = PhaseProcessConfig(10**8, 10, 0.25, S=5)
    assert cfg.L == math.ceil(4 * BETA * 10 + 1) == 3635
    assert cfg.Lambda == pytest.approx(0.25 * math.log(10**8) - 5 - math.log(40 * BETA) - 1)
    assert cfg.Lambda == pytest.approx(-9.5927, abs=1e-4)
    assert cfg.b == pytest.approx(100.0)
    with pytest.raises(ValueError):
        PhaseProcessConfig(100, 5, 0.5)


def test_phase_constant_trace_advances_by_L():
    cfg = small_cfg()
    L = cfg.L
    run = phase_process_run(np.full(3 * L + 5, 9990), cfg)
    assert list(run.phi) == [0, L, 2 * L, 3 * L]
    assert np.all(run.z == 10)


def test_phase_ends_at_first_improvement():
    cfg = small_cfg()
    trace = np.full(cfg.L + 10, 9995)
    trace[1:] = 9996
    run = phase_process_run(trace, cfg)
    assert run.phi[1] == 1
    assert run.z[0] == 5 and run.z[1] == 4


@given(st.lists(st.integers(-2, 2), min_size=1, max_size=2000), st.integers(9980, 9999))
@settings(max_examples=60, deadline=None)
def test_phase_invariants(steps, start):
    cfg = small_cfg()
    trace = np.clip(start + np.cumsum([0] + steps), 0, 10**4)
    run = phase_process_run(trace, cfg)
    assert np.all((run.z >= 0) & (run.z <= cfg.b))
    assert np.all(run.lengths >= 1) and np.all(run.lengths <= cfg.L)
    assert run.lengths.sum() == run.consumed == run.phi[-1]
    assert run.consumed <= len(trace) - 1
    # no top-level exceedance twice within one phase started below the cap
    below_cap = run.z[:-1] < cfg.b
    assert np.all(run.crossings[below_cap] <= 1)


def test_jump_profile_bounds():
    n, mu, lam = 400, 5, 13
    reps = jump_profile(n, mu, lam, PhaseProcessConfig(n, mu, 0.25), 5, 3, RngStream(13))
    assert [r.parameters["k"] for r in reps] == [1, 2, 3]
    assert all(r.passed for r in reps)


# --- drift theorem evaluators ---------------------------------------------------


def test_negative_drift_examples():
    assert negative_drift_bound(1.0, 2.0, 0.1, 3.0, 5.0, 5.0) == pytest.approx(0.6)
    assert negative_drift_bound(1.0, 2.0, 1.0, 3.0, 5.0, 5.0) == 1.0
    assert negative_drift_bound(1.0, 12.0, 1.0, 1.0, 0.0, 10.0) == pytest.approx(12 * math.exp(-10))
    assert negative_drift_bound(1.0, 12.0, 1.0, 1.0, 0.0, 10.0) == pytest.approx(5.448e-4, rel=1e-3)
    with pytest.raises(ValueError):
        negative_drift_bound(0.0, 1, 1, 1, 0, 1)
    with pytest.raises(ValueError):
        negative_drift_bound(1.0, 0.5, 1, 1, 0, 1)


pos = st.floats(1e-3, 50)


@given(pos, pos, st.floats(1, 1e3), pos, pos, pos, st.floats(0, 20), st.floats(0, 20))
def test_negative_drift_monotone(lam1, lam2, p, D, L, extra, a, gap):
    lo, hi = sorted((lam1, lam2))
    b = a + gap
    f = lambda **kw: negative_drift_bound(**{**dict(Lambda=lo, p=p, D=D, Lwindow=L, a=a, b=b), **kw})
    assert f(Lambda=hi) <= f() + 1e-15
    assert f(p=p + extra) >= f() - 1e-15
    assert f(D=D + extra) >= f() - 1e-15
    assert f(Lwindow=L + extra) >= f() - 1e-15
    assert f(b=b + extra) <= f() + 1e-15
    assert f(a=a - extra) <= f() + 1e-15


@given(st.floats(0, 1e6), pos, pos, st.floats(0, 100))
def test_additive_drift_monotone(x0, d1, d2, extra):
    lo, hi = sorted((d1, d2))
    assert additive_drift_bound(x0, hi) <= additive_drift_bound(x0, lo)
    assert additive_drift_bound(x0 + extra, lo) >= additive_drift_bound(x0, lo)


def test_additive_drift_examples():
    assert additive_drift_bound(0, 1.0) == 0
    assert additive_drift_bound(100, 0.5, "upper") == 200
    assert additive_drift_bound(100, 0.5, "lower") == 200
    with pytest.raises(ValueError):
        additive_drift_bound(1, 0)


@pytest.mark.parametrize("x0,delta", [(100, 0.5), (37, 1), (10, 2.5)])
def test_additive_drift_deterministic_process(x0, delta):
    x, t = float(x0), 0
    while x > 1e-9:
        x -= delta
        t += 1
    assert t == additive_drift_bound(x0, delta)


def test_exponential_moment_limit_and_decomposition():
    steps = RngStream(14).generator.integers(-3, 4, 500)
    assert exponential_moment(steps, 1e-12)["moment"] == pytest.approx(1.0)
    m = exponential_moment(steps, 0.7)
    assert abs(m["sigma_minus"] + m["sigma_zero"] + m["sigma_plus"] - m["moment"]) < 1e-10
    assert math.isnan(exponential_moment([], 1.0)["moment"])


def test_exponential_moment_check_reports_infeasibility():
    n, mu, lam = 400, 5, 13
    cfg = PhaseProcessConfig(n, mu, 0.25)
    moment, loss = check_exponential_moment(n, mu, lam, cfg, 3, RngStream(15), phases=2, Lambda=1.0)
    assert cfg.Lambda < 0 and not moment.hypothesis_ok
    assert moment.bound == pytest.approx(1 - math.exp(-cfg.S) / 12)
    assert loss.parameters["feasible"] is False
