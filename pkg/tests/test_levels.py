import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from commalab.core import Population, run_generation
from commalab.levels import (SWEEP_COLUMNS, CurrentLevelState, LevelTracker, check_stay_bound, gain_threshold,
                             initial_level, lambda_from_ratio, large_mu, level_status, loss_threshold,
                             run_phase1_experiment, run_phase2_experiment, run_threshold_sweep, update_level)
from commalab.rng import RngStream


# --- thresholds and status ------------------------------------------------------


def test_thresholds_use_ceiling():
    assert [gain_threshold(m) for m in (1, 2, 3, 4, 5)] == [1, 1, 2, 2, 3]
    assert [loss_threshold(m) for m in (1, 4, 5, 8, 9)] == [1, 1, 2, 2, 3]


def test_status_examples():
    assert level_status(4, 0, 4) == "active"
    assert level_status(2, 2, 4) == "gained"
    assert level_status(1, 0, 8) == "lost"


@given(st.integers(1, 400))
def test_status_boundaries(mu):
    q, h = loss_threshold(mu), gain_threshold(mu)
    # loss fires exactly below ceil(mu/4)
    assert level_status(q - 1, 0, mu) == "lost"
    assert level_status(q, 0, mu) == "active"
    assert level_status(q + 1, 0, mu) != "lost"
    # gain fires exactly at ceil(mu/2)
    assert level_status(mu - (h - 1), h - 1, mu) == "active"
    assert level_status(mu - h, h, mu) == "gained"
    if h + 1 <= mu:
        assert level_status(mu - h - 1, h + 1, mu) == "gained"


def test_state_rejects_unknown_status():
    with pytest.raises(ValueError):
        CurrentLevelState(0, 0, 1, 0, "weird")


# --- update rules ---------------------------------------------------------------


def test_initial_level_anchors_upward():
    st_ = initial_level(np.array([5, 5, 6, 6, 7, 7, 7, 9]))
    # 4 = ceil(8/2) members lie above 6, only one above 7
    assert st_.f == 7
    assert (st_.x, st_.y) == (3, 1)
    assert st_.status == "active"


def test_gain_cascades_to_supported_level():
    st_ = CurrentLevelState(3, 0, 4, 0)
    new = update_level(st_, np.array([8, 8, 8, 9]), 5)
    assert new.status == "gained"
    assert new.f == 8 and new.t0 == 5


def test_loss_restarts_from_zero():
    st_ = CurrentLevelState(10, 0, 8, 0)
    new = update_level(st_, np.array([2, 2, 2, 2, 3, 3, 3, 11]), 7)
    assert new.status == "lost"
    # restart at 0, then climb while at least 4 members lie strictly above
    assert new.f == 3 and (new.x, new.y) == (3, 1)


def test_active_keeps_anchor_time():
    st_ = CurrentLevelState(5, 3, 4, 0)
    new = update_level(st_, np.array([5, 5, 5, 6]), 9)
    assert new.status == "active" and new.t0 == 3 and (new.x, new.y) == (3, 1)


def test_tracker_counts_match_scratch_and_restarts_add_up():
    n, mu, lam = 40, 8, 12
    g = RngStream(1).generator
    pop = Population.at_levels(n, [10] * mu, g)
    tr = LevelTracker(mu)
    tr.update(pop)
    total = 300
    for _ in range(total):
        pop = run_generation(pop, lam, g)
        tr.update(pop)
        st_ = tr.state
        assert st_.x + st_.y == int(np.count_nonzero(pop.fitness >= st_.f))
        assert st_.y == int(np.count_nonzero(pop.fitness > st_.f))
        assert st_.x + st_.y >= loss_threshold(mu) and st_.y < gain_threshold(mu)
    assert len(tr.levels) == total + 1
    assert sum(tr.attempt_lengths(total)) == total


# --- phase experiments ----------------------------------------------------------


def test_phase1_refuses_subcritical():
    with pytest.raises(ValueError):
        run_phase1_experiment(30, 10, 10, 2, RngStream(0))


def test_phase1_small_run_finite():
    rep = run_phase1_experiment(30, 64, 174, 3, RngStream(2))
    assert rep.censored == 0 and math.isfinite(rep.mean)
    assert rep.mean > 0
    assert not rep.hypothesis_ok


def test_phase2_gain_before_loss_mostly():
    n = 60
    mu = 64
    rep = run_phase2_experiment(n, mu, math.ceil(math.e * mu), n // 2, 20, RngStream(3))
    assert rep.losses + rep.censored <= 2
    assert rep.bound == pytest.approx(16.0)


def test_phase2_rejects_bad_start():
    with pytest.raises(ValueError):
        run_phase2_experiment(30, 10, 28, 5, 1, RngStream(0))


def test_stay_bound_trivial_horizon():
    rep = check_stay_bound(50, 40, 109, 0, 10, RngStream(4))
    assert rep.empirical == 1.0 and rep.bound == 1.0 and rep.passed


def test_stay_bound_out_of_hypothesis_flagged():
    n = 50
    mu = math.ceil(n ** (2 / 3))
    rep = check_stay_bound(n, mu, math.ceil(math.e * mu), 100, 10, RngStream(5))
    assert not rep.hypothesis_ok
    assert rep.parameters["h"] == pytest.approx(mu / n ** (2 / 3))


def test_large_mu_value():
    assert large_mu(30) == 1293


# --- sweep ------------------------------------------------------------------------


def test_lambda_rounding():
    assert lambda_from_ratio(10, 1.2, "ceil") == 33
    assert lambda_from_ratio(10, 0.8, "floor") == 21
    assert lambda_from_ratio(25, 0.8, "floor") == 54
    assert lambda_from_ratio(256, 1.0, "ceil") == 696
    assert lambda_from_ratio(10, 1.0, "floor") == 27
    assert lambda_from_ratio(10, 1.0, "nearest") == 27
    with pytest.raises(ValueError):
        lambda_from_ratio(10, 1.0, "up")


def wilson(k, n, z=1.959963984540054):
    p = k / n
    centre = (p + z * z / (2 * n)) / (1 + z * z / n)
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / (1 + z * z / n)
    return centre - half, centre + half


def test_sweep_csv_golden_and_ci():
    surf = run_threshold_sweep(40, [3], [0.6, 1.5], 400, 6, seed=3, jobs=1)
    lines = surf.to_csv().splitlines()
    assert lines[0] == "n,mu,lambda,ratio,replicates,successes,mean_generations,ci_low,ci_high,in_hypothesis"
    assert tuple(lines[0].split(",")) == SWEEP_COLUMNS
    assert len(lines) == 3
    for c in surf.cells:
        lo, hi = wilson(c.successes, c.replicates)
        assert c.ci_low == pytest.approx(max(lo, 0.0), abs=1e-9)
        assert c.ci_high == pytest.approx(min(hi, 1.0), abs=1e-9)


def test_sweep_independent_of_jobs():
    a = run_threshold_sweep(30, [2, 3], [0.8, 1.4], 300, 4, seed=9, jobs=1).to_csv()
    b = run_threshold_sweep(30, [2, 3], [0.8, 1.4], 300, 4, seed=9, jobs=2).to_csv()
    assert a == b


def test_sweep_trend_monotone_in_ratio():
    surf = run_threshold_sweep(60, [5], [0.6, 1.0, 1.6], 3000, 20, seed=4, jobs=1)
    rates = [c.success_rate for c in surf.cells]
    for r1, r2 in zip(rates, rates[1:]):
        se = math.sqrt(max(r1 * (1 - r1), r2 * (1 - r2), 0.25 / 20) / 20)
        assert r1 <= r2 + 3 * se


def test_sweep_rejects_empty_grid_and_small_lambda():
    with pytest.raises(ValueError):
        run_threshold_sweep(30, [], [1.0], 10, 1)
    with pytest.raises(ValueError):
        run_threshold_sweep(30, [10], [0.2], 10, 1)
