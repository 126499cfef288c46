import math

import numpy as np
import pytest

from switchnet.model import CapacityPolytope, enumerate_schedules
from switchnet.normconst import NormConstCache
from switchnet.propfair import (
    InfeasibleTargetError,
    ScheduleDistribution,
    decompose_mean,
    sf_pf_gap,
    solve_prop_fair,
)
from switchnet.storeforward import store_forward_rates


def test_shared_pool_solution():
    poly = CapacityPolytope(np.array([[1.0, 1.0]]))
    sol = solve_prop_fair([2, 1], poly)
    np.testing.assert_allclose(sol.rates, [2 / 3, 1 / 3], atol=1e-10)
    assert sol.objective == pytest.approx(2 * math.log(2 / 3) + math.log(1 / 3))
    assert sol.converged
    assert sol.kkt_residual <= 1e-8
    # stationarity gives the pool price sum(Q) on the raw scale
    np.testing.assert_allclose(sol.prices, [3.0], atol=1e-8)


def test_zero_queue_pinned():
    poly = CapacityPolytope(np.array([[1.0, 1.0]]))
    sol = solve_prop_fair([0, 5], poly)
    np.testing.assert_allclose(sol.rates, [0.0, 1.0], atol=1e-10)
    assert sol.objective == pytest.approx(0.0)


def test_all_zero_rejected():
    poly = CapacityPolytope(np.array([[1.0, 1.0]]))
    with pytest.raises(ValueError):
        solve_prop_fair([0, 0], poly)


def test_dedicated_pools_saturate():
    poly = CapacityPolytope(np.eye(2))
    sol = solve_prop_fair([3, 5], poly)
    np.testing.assert_allclose(sol.rates, [1.0, 1.0], atol=1e-10)
    assert sol.objective == pytest.approx(0.0, abs=1e-9)


def test_four_cycle_degenerate_corner(cycle4):
    # all four edge constraints bind at (1/2, 1/2, 1/2, 1/2); the dual is
    # not unique there, so only primal quantities are pinned
    _, poly, _ = cycle4
    sol = solve_prop_fair([2, 1, 1, 2], poly)
    np.testing.assert_allclose(sol.rates, [0.5, 0.5, 0.5, 0.5], atol=1e-8)
    assert sol.objective == pytest.approx(6 * math.log(0.5), abs=1e-10)
    assert sol.kkt_residual <= 1e-8
    assert sol.converged


def test_kkt_certificate_random(cycle4):
    # nonnegative prices supporting Q_j / s_j = sum_l p_l A_lj on active
    # queues, with complementary slackness
    _, poly, _ = cycle4
    A = poly.matrix
    rng = np.random.default_rng(2)
    for _ in range(25):
        Q = rng.integers(0, 9, size=4)
        if not Q.any():
            continue
        sol = solve_prop_fair(Q, poly)
        assert sol.converged
        assert np.all(sol.prices >= -1e-9)
        assert np.all(A @ sol.rates <= 1 + 1e-7)
        active = Q > 0
        lhs = Q[active] / sol.rates[active]
        rhs = (A.T @ sol.prices)[active]
        np.testing.assert_allclose(lhs, rhs, rtol=1e-5, atol=1e-5)
        slack = 1.0 - A @ sol.rates
        assert float(np.abs(sol.prices * slack).max()) <= 1e-6 * max(1.0, Q.sum())


def test_scale_invariance_of_rates():
    poly = CapacityPolytope(np.array([[1.0, 0.6], [0.4, 1.0]]))
    base = solve_prop_fair([3, 2], poly)
    scaled = solve_prop_fair([30, 20], poly)
    np.testing.assert_allclose(base.rates, scaled.rates, atol=1e-8)
    np.testing.assert_allclose(scaled.prices, 10 * np.asarray(base.prices), rtol=1e-5)


def test_warm_start_agrees(cycle4):
    _, poly, _ = cycle4
    cold = solve_prop_fair([4, 2, 3, 1], poly)
    warm = solve_prop_fair([4, 2, 3, 1], poly, warm_prices=cold.prices)
    np.testing.assert_allclose(cold.rates, warm.rates, atol=1e-8)


def test_gap_shared_pool_is_zero():
    poly = CapacityPolytope(np.array([[1.0, 1.0]]))
    gaps = sf_pf_gap([2, 1], poly, [1, 2, 8, 64])
    assert np.all(gaps <= 1e-8)


def test_gap_tandem_identically_zero():
    poly = CapacityPolytope(np.eye(2))
    gaps = sf_pf_gap([3, 1], poly, [1, 8, 32])
    assert np.all(gaps <= 1e-9)


def test_gap_four_cycle_shrinks(cycle4):
    _, poly, _ = cycle4
    cache = NormConstCache(poly)
    gaps = sf_pf_gap([2, 1, 1, 2], poly, [1, 4, 16], cache=cache)
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 0.02


def test_gap_matches_direct_computation():
    poly = CapacityPolytope(np.array([[1.0, 1.0]]))
    Q = np.array([3, 2])
    (gap,) = sf_pf_gap(Q, poly, [4])
    direct = np.abs(
        store_forward_rates(4 * Q, poly) - solve_prop_fair(Q, poly).rates
    ).max()
    assert gap == pytest.approx(direct, abs=1e-12)


def test_decompose_one_edge():
    sched = np.array([[0, 0], [1, 0], [0, 1]])
    dist = decompose_mean([2 / 3, 1 / 3], sched)
    np.testing.assert_allclose(dist.mean, [2 / 3, 1 / 3], atol=1e-9)
    got = {tuple(s): p for s, p in zip(dist.schedules, dist.probabilities)}
    assert got[(1, 0)] == pytest.approx(2 / 3, abs=1e-9)
    assert got[(0, 1)] == pytest.approx(1 / 3, abs=1e-9)


def test_decompose_support_caratheodory():
    # no interference: 4 schedules on 2 queues, support must stay <= J + 1
    sched = np.array([[0, 0], [1, 0], [0, 1], [1, 1]])
    dist = decompose_mean([0.5, 0.5], sched)
    assert dist.support_size <= 3
    np.testing.assert_allclose(dist.mean, [0.5, 0.5], atol=1e-9)


def test_decompose_probabilities_normalized(cycle4):
    _, poly, g = cycle4
    sched = enumerate_schedules(g)
    target = solve_prop_fair([2, 1, 1, 2], poly).rates
    dist = decompose_mean(target, sched)
    assert dist.probabilities.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(dist.probabilities > 0)
    assert dist.support_size <= 5
    np.testing.assert_allclose(dist.mean, target, atol=1e-8)


def test_decompose_infeasible():
    sched = np.array([[0, 0], [1, 0], [0, 1]])
    with pytest.raises(InfeasibleTargetError):
        decompose_mean([0.9, 0.9], sched)  # outside conv(S) for one edge


def test_distribution_sampling_deterministic():
    sched = np.array([[0, 0], [1, 0], [0, 1]])
    dist = ScheduleDistribution(
        schedules=sched, probabilities=np.array([0.2, 0.5, 0.3])
    )
    a = [tuple(dist.sample(np.random.default_rng(3))) for _ in range(5)]
    b = [tuple(dist.sample(np.random.default_rng(3))) for _ in range(5)]
    assert a == b
    # long-run frequencies approach the weights
    rng = np.random.default_rng(17)
    draws = np.array([dist.sample(rng) for _ in range(20_000)])
    np.testing.assert_allclose(draws.mean(axis=0), dist.mean, atol=0.01)


def test_decompose_rejects_bad_target():
    sched = np.array([[0, 0], [1, 0], [0, 1]])
    with pytest.raises(ValueError):
        decompose_mean([0.5], sched)
