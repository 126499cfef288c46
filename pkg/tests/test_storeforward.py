import itertools
import math

import numpy as np
import pytest

from switchnet.model import CapacityPolytope, compute_loads
from switchnet.normconst import NormConstCache, norm_const
from switchnet.storeforward import (
    InadmissibleLoadError,
    StationarySampler,
    expected_queue_lengths,
    expected_route_delay,
    log_stationary_weight,
    sample_stationary_state,
    stationary_normalizer,
    stationary_weight,
    store_forward_rates,
)


def test_shared_pool_is_length_proportional():
    poly = CapacityPolytope(np.array([[1.0, 1.0]]))
    np.testing.assert_allclose(store_forward_rates([2, 1], poly), [2 / 3, 1 / 3])
    np.testing.assert_allclose(store_forward_rates([1, 1], poly), [0.5, 0.5])
    np.testing.assert_allclose(store_forward_rates([7, 0], poly), [1.0, 0.0])


def test_empty_network_gets_nothing():
    poly = CapacityPolytope(np.array([[1.0, 1.0]]))
    np.testing.assert_allclose(store_forward_rates([0, 0], poly), [0.0, 0.0])


def test_weighted_pool_closed_form():
    # one pool with weights w: sigma_j = Q_j / (sum(Q) * w_j)
    w = np.array([0.5, 1.25])
    poly = CapacityPolytope(w[None, :])
    for Q in [(1, 1), (3, 2), (5, 1)]:
        got = store_forward_rates(Q, poly)
        expect = np.asarray(Q) / (sum(Q) * w)
        np.testing.assert_allclose(got, expect, rtol=1e-12)


def test_allocation_feasible(cycle4):
    _, poly, _ = cycle4
    rng = np.random.default_rng(4)
    for _ in range(50):
        Q = rng.integers(0, 6, size=4)
        s = store_forward_rates(Q, poly)
        assert np.all(s >= -1e-12)
        assert np.all(poly.matrix @ s <= 1 + 1e-9)
        np.testing.assert_array_equal(s[Q == 0], 0.0)


def test_mm1_weight_and_geometric_law():
    poly = CapacityPolytope(np.array([[1.0]]))
    from switchnet.model import NetworkSpec, Route

    spec = NetworkSpec(
        n_queues=1, routes=[Route(id="r", path=(0,), rate=0.4)], capacity=poly
    )
    assert stationary_weight([2], ((0, 0),), spec, poly) == pytest.approx(0.16)
    z = stationary_normalizer(compute_loads(spec, poly))
    assert z == pytest.approx(0.6)
    # (1 - a) sum_{q <= N} a^q = 1 - a^{N+1}
    total = sum(
        z * stationary_weight([q], ((0,) * q,), spec, poly) for q in range(40)
    )
    assert total == pytest.approx(1.0 - 0.4**40, rel=1e-12)


def test_shared_pool_weight(single_pool):
    spec, poly = single_pool
    w = stationary_weight([1, 1], ((0,), (1,)), spec, poly)
    assert w == pytest.approx(0.12)  # Phi(1,1) * 0.2 * 0.3


def test_normalizers(single_pool, tandem, pooled_route):
    for (spec, poly), expect in [
        (single_pool, 0.5),
        (tandem, 0.25),
        (pooled_route, 0.4),
    ]:
        z = stationary_normalizer(compute_loads(spec, poly))
        assert z == pytest.approx(expect)


def test_weight_sums_over_labels(merge):
    # summing weights over every FIFO labeling of fixed Q must equal
    # Phi(Q) * prod_j (queue load)^Q_j
    spec, poly = merge
    loads = compute_loads(spec, poly)
    Q = (1, 1, 2)
    routes_through = [
        [r for r in range(spec.n_routes) if j in spec.routes[r].path]
        for j in range(spec.n_queues)
    ]
    total = 0.0
    for labels in itertools.product(
        *[itertools.product(routes_through[j], repeat=Q[j]) for j in range(3)]
    ):
        total += stationary_weight(Q, labels, spec, poly)
    expect = norm_const(Q, poly) * float(np.prod(loads.queue_loads ** np.array(Q)))
    assert total == pytest.approx(expect, rel=1e-12)


def test_truncated_mass_product_form(merge):
    # merge has dedicated pools, so the truncated stationary mass is the
    # product of finite geometric sums: an exact closed form to hit.
    spec, poly = merge
    loads = compute_loads(spec, poly)
    z = stationary_normalizer(loads)
    N = 9
    routes_through = [
        [r for r in range(spec.n_routes) if j in spec.routes[r].path]
        for j in range(spec.n_queues)
    ]
    mass = 0.0
    for Q in itertools.product(range(N + 1), repeat=3):
        # label sum collapses to prod a_j^{Q_j}; use one representative
        # label per queue and scale by the number-weighted ratio
        phi = norm_const(Q, poly)
        mass += z * phi * float(np.prod(loads.queue_loads ** np.array(Q)))
    expect = float(np.prod(1.0 - loads.queue_loads ** (N + 1)))
    assert mass == pytest.approx(expect, rel=1e-12)


def test_fifo_validation(single_pool):
    spec, poly = single_pool
    with pytest.raises(ValueError):
        log_stationary_weight([1, 1], ((0,),), spec, poly)  # wrong length
    with pytest.raises(ValueError):
        log_stationary_weight([1, 1], ((0, 0), ()), spec, poly)  # count mismatch
    with pytest.raises(ValueError):
        log_stationary_weight([1, 1], ((1,), (1,)), spec, poly)  # r1 not via q0
    with pytest.raises(ValueError):
        log_stationary_weight([1, 0], ((9,), ()), spec, poly)  # unknown route


def test_inadmissible_raises():
    from switchnet.model import NetworkSpec, Route

    poly = CapacityPolytope(np.array([[1.0, 1.0]]))
    spec = NetworkSpec(
        n_queues=2,
        routes=[
            Route(id="r0", path=(0,), rate=0.6),
            Route(id="r1", path=(1,), rate=0.5),
        ],
        capacity=poly,
    )
    with pytest.raises(InadmissibleLoadError):
        stationary_normalizer(compute_loads(spec, poly))
    with pytest.raises(InadmissibleLoadError):
        StationarySampler(spec, poly, seed=0)
    with pytest.raises(InadmissibleLoadError):
        expected_queue_lengths(spec, poly)


def test_expected_queue_lengths(single_pool, tandem):
    spec, poly = single_pool
    np.testing.assert_allclose(expected_queue_lengths(spec, poly), [0.4, 0.6])
    spec, poly = tandem
    np.testing.assert_allclose(expected_queue_lengths(spec, poly), [1.0, 1.0])


def test_expected_route_delay_closed_forms(tandem, pooled_route, single_pool):
    spec, poly = tandem
    assert expected_route_delay("r0", spec, poly) == pytest.approx(4.0)
    spec, poly = pooled_route
    assert expected_route_delay(spec.routes[0], spec, poly) == pytest.approx(5.0)
    # visit-count form: one visit to each queue of the shared pool
    spec, poly = single_pool
    d = expected_route_delay(np.array([1.0, 1.0]), spec, poly)
    assert d == pytest.approx(2.0 / 0.5)  # two visits, each 1/(1-0.5)


def test_expected_route_delay_unknown_id(tandem):
    spec, poly = tandem
    with pytest.raises(ValueError):
        expected_route_delay("nope", spec, poly)


def test_sampler_total_is_geometric(single_pool_sym):
    spec, poly = single_pool_sym
    sampler = StationarySampler(spec, poly, seed=123)
    qs = sampler.sample_queues(200_000)
    totals = qs.sum(axis=1)
    # P(total = n) = (1 - 0.6) 0.6^n
    for n in range(6):
        emp = float(np.mean(totals == n))
        expect = 0.4 * 0.6**n
        assert emp == pytest.approx(expect, abs=4.0 * math.sqrt(expect / 200_000) + 1e-4)


def test_sampler_matches_mean_formula(single_pool, cycle4):
    spec, poly = single_pool
    qs = StationarySampler(spec, poly, seed=7).sample_queues(150_000)
    np.testing.assert_allclose(
        qs.mean(axis=0), expected_queue_lengths(spec, poly), atol=0.012
    )
    spec, poly, _ = cycle4
    qs = StationarySampler(spec, poly, seed=11).sample_queues(150_000)
    np.testing.assert_allclose(
        qs.mean(axis=0), expected_queue_lengths(spec, poly), atol=0.02
    )


def test_sampler_split_conditional_binomial(single_pool_sym):
    # given the pool total, the first queue's share is Binomial(n, 1/2)
    spec, poly = single_pool_sym
    qs = StationarySampler(spec, poly, seed=5).sample_queues(200_000)
    totals = qs.sum(axis=1)
    sel = totals == 3
    counts = np.bincount(qs[sel, 0], minlength=4)
    probs = counts / counts.sum()
    expect = np.array([1, 3, 3, 1]) / 8.0
    np.testing.assert_allclose(probs, expect, atol=0.02)


def test_sample_state_fifo_consistent(merge):
    spec, poly = merge
    Q, fifo = sample_stationary_state(spec, poly, seed=42)
    assert len(fifo) == spec.n_queues
    for j in range(spec.n_queues):
        assert len(fifo[j]) == Q[j]
        for r in fifo[j]:
            assert j in spec.routes[r].path


def test_sampler_reproducible(single_pool):
    spec, poly = single_pool
    a = StationarySampler(spec, poly, seed=99).sample_queues(1000)
    b = StationarySampler(spec, poly, seed=99).sample_queues(1000)
    np.testing.assert_array_equal(a, b)


def test_allocation_cache_shared(cycle4):
    _, poly, _ = cycle4
    cache = NormConstCache(poly)
    s1 = store_forward_rates([2, 1, 1, 2], poly, cache)
    s2 = store_forward_rates([2, 1, 1, 2], poly, cache)
    np.testing.assert_array_equal(s1, s2)
    assert len(cache) > 0
