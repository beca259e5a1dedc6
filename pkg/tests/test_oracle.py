import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sndo import PROFILES, Knobs, Oracle, OracleParams, ParameterError, parse_norm
from sndo.oracle import (estimate_layer_sizes, miss_probability, size_from_eta, size_from_miss,
                         track_probability, track_threshold)

L1 = parse_norm("lp:1")
D = 512


def build(X, seed=1, **kw):
    return Oracle.build(X, L1, 0.25, 0.1, seed, profile="desk", **kw)


@pytest.fixture(scope="module")
def data():
    rng = np.random.default_rng(0)
    return rng.standard_normal((5, D)) * np.exp(rng.uniform(-1, 1, D))


@pytest.fixture(scope="module")
def oracle(data):
    return build(data)


def test_unit_constant_params():
    p = OracleParams.derive(32, 512, 0.25, 0.1, 1.0, Knobs(), 0.75)
    assert p.L == 9 and p.d_pad == 512
    assert p.eps1 == pytest.approx(0.0625 / 9)
    assert p.R == math.ceil(p.eps1**-2 * math.log(320) * 81)
    assert p.U == math.ceil(math.log(32 * 512**2 / 0.1))
    assert p.beta == pytest.approx(0.25**5 / 9**5)
    assert p.alpha == pytest.approx(1 + 0.25 * 0.75)
    assert p.eps_hh == pytest.approx(math.sqrt(p.beta))
    assert p.threshold == pytest.approx(track_threshold(p.R, 0.1, 512))


def test_desk_params():
    p = OracleParams.derive(32, 512, 0.25, 0.1, 1.0, PROFILES["desk"], 0.75)
    assert (p.R, p.U, p.L) == (48, 1, 9)
    assert p.beta == pytest.approx(1 / 64, rel=1e-3)


@settings(max_examples=100)
@given(n=st.integers(1, 10**6), d=st.integers(2, 10**6), eps=st.floats(0.01, 0.99),
       delta=st.floats(1e-6, 0.99), xi=st.floats(0.5, 1.0), mmc=st.floats(1.0, 100.0))
def test_param_invariants(n, d, eps, delta, xi, mmc):
    p = OracleParams.derive(n, d, eps, delta, mmc, Knobs(), xi)
    assert 1 < p.alpha <= 1 + eps
    assert 0 < p.beta <= 1 and p.eps1 < eps
    assert min(p.L, p.R, p.U, p.P) >= 1
    assert p.d_pad >= d and p.d_pad & (p.d_pad - 1) == 0
    assert p.threshold <= p.R


def test_param_errors():
    k = Knobs()
    for args in ((1, 64, 0.0, 0.1), (1, 64, 1.0, 0.1), (1, 64, 0.3, 0.0), (0, 64, 0.3, 0.1)):
        with pytest.raises(ParameterError):
            OracleParams.derive(*args, 1.0, k, 0.75)
    for bad in (dict(k_gamma=10.0), dict(k_beta=1e9), dict(k_eps1=100.0), dict(k_track=1e6)):
        with pytest.raises(ParameterError):
            OracleParams.derive(4, 64, 0.3, 0.1, 1.0, k.with_overrides(**bad), 0.75)
    with pytest.raises(ParameterError):
        k.with_overrides(k_nope=1.0)
    with pytest.raises(ParameterError):
        Knobs(k_R=-1.0)
    with pytest.raises(ParameterError):
        Knobs(C0=10.0)


def test_memory_guard(data):
    with pytest.raises(ParameterError, match="GB"):
        Oracle.build(data, L1, 0.25, 0.1, 0, profile="paper")


def test_build_errors(data):
    with pytest.raises(ParameterError):
        build(np.zeros((0, D)))
    bad = data.copy()
    bad[0, 0] = np.nan
    with pytest.raises(ParameterError):
        build(bad)


def test_inversion():
    eta = track_probability(2, 8)
    assert eta == pytest.approx(1 - 0.75**8)
    assert size_from_eta(eta, 2) == pytest.approx(8, abs=1e-9)
    assert size_from_miss(miss_probability(30, 1000), 30) == pytest.approx(1000, rel=1e-9)


def test_estimate_layer_sizes():
    A = np.array([[10, 3, 0], [9, 1, 0], [2, 0, 0]])
    est = estimate_layer_sizes(A, 10, 2.0, 0.0, np.array([4, 5, 6]))
    assert est.q.tolist() == [3, 1, 0]
    assert est.c[2] == 0
    assert est.eta_hat.tolist() == pytest.approx([0.2, 0.3, 0.0])
    assert est.c[0] == pytest.approx(math.log(0.8) / math.log(1 - 1 / 8))
    prof = est.profile(2.0, 100)
    assert prof.exponents.tolist() == [4, 5, 6]
    assert np.all(est.A <= 10)


def test_zero_point():
    o = build(np.zeros((1, D)))
    assert all(not np.any(c) for c in o.counters) and not np.any(o.tail_y)
    assert not np.any(o.xbar)
    assert o.query_all(np.zeros(D)).tolist() == [0.0]


def test_bmap_shape():
    o = build(np.ones((2, 300)))
    assert not o.bmap[:, 300:].any()
    o = build(np.ones((2, D)), seed=4)
    p = o.params
    for level in range(1, p.L + 1):
        rows = o.bmap[o.cell_level == level]
        mean, var = D * 2.0**-level, D * 2.0**-level * (1 - 2.0**-level)
        assert abs(rows.sum() - rows.shape[0] * mean) <= 5 * math.sqrt(rows.shape[0] * var) + 1
    assert np.array_equal(o.xbar[0], np.ones(o.pair_cell.size))


def test_deterministic(data):
    a, b, c = build(data), build(data), build(data, seed=2)
    assert all(np.array_equal(x, y) for x, y in zip(a.counters, b.counters))
    assert np.array_equal(a.bmap, b.bmap) and not np.array_equal(a.bmap, c.bmap)
    assert a.params.alpha == b.params.alpha


def test_cell_bank_matches_grid(oracle):
    for r, l, u in ((0, 1, 0), (3, 5, 0), (oracle.params.R - 1, oracle.params.L, 0)):
        bank = oracle.cell_bank(r, l, u)
        c = oracle.cell_index(r, l, u)
        for i in range(oracle.params.n):
            got = oracle.cell_counters(c, i)
            want = [sk.counters[i] for sk in bank.levels] + [bank.tail.y[i]]
            for g, w in zip(got, want):
                assert np.allclose(g, w, rtol=1e-9, atol=1e-9)
    with pytest.raises(IndexError):
        oracle.cell_index(0, 0, 0)


def test_update_noop(data):
    o = build(data)
    before = [c.copy() for c in o.counters]
    o.update_x(2, data[2].copy())
    assert all(np.allclose(x, y, rtol=0, atol=1e-12) for x, y in zip(before, o.counters))


def test_update_matches_rebuild(data):
    rng = np.random.default_rng(9)
    o = build(data)
    z1, z2 = rng.standard_normal((2, D))
    o.update_x(1, z1)
    o.update_x(1, z2)
    new = data.copy()
    new[1] = z2
    fresh = build(new)
    for a, b in zip(o.counters, fresh.counters):
        assert np.allclose(a, b, rtol=1e-9, atol=1e-9 * np.abs(b).max())
    assert np.allclose(o.tail_y, fresh.tail_y, rtol=1e-9, atol=1e-9 * np.abs(fresh.tail_y).max())
    assert np.array_equal(o.xbar, fresh.xbar)
    q = rng.standard_normal(D)
    assert o.query_set(q, [1]) == pytest.approx(fresh.query_set(q, [1]), rel=1e-9)


def test_update_errors(oracle):
    with pytest.raises(IndexError):
        oracle.update_x(5, np.zeros(D))
    with pytest.raises(ValueError):
        oracle.update_x(0, np.zeros(D - 1))
    with pytest.raises(ValueError):
        oracle.update_x(0, np.full(D, np.inf))


def test_self_queries_zero(oracle, data):
    for j in range(oracle.params.n):
        assert oracle.query_all(data[j])[j] == 0.0
        assert oracle.est_pair(j, j) == 0.0


def test_query_set_restricts(oracle, data):
    q = data[0] + 0.5
    full = oracle.query_all(q)
    assert np.array_equal(oracle.query_set(q, [3, 1]), full[[3, 1]])
    assert oracle.query_set(q, []).size == 0
    assert np.array_equal(oracle.query_all(q, threads=4), full)


def test_query_errors(oracle):
    with pytest.raises(ValueError):
        oracle.query_all(np.zeros(D + 1))
    with pytest.raises(IndexError):
        oracle.query_set(np.zeros(D), [7])
    with pytest.raises(IndexError):
        oracle.est_pair(0, -1)


def test_est_pair_symmetric(oracle):
    for i in range(oracle.params.n):
        for j in range(i + 1, oracle.params.n):
            assert oracle.est_pair(i, j) == oracle.est_pair(j, i)


def test_accuracy_sanity(oracle, data):
    q = np.random.default_rng(3).standard_normal(D)
    ratio = oracle.query_all(q) / np.abs(q - data).sum(axis=1)
    assert np.all((ratio > 0.7) & (ratio < 1.3))


@settings(max_examples=15)
@given(seed=st.integers(0, 2**32), scale=st.floats(1e-3, 1e3))
def test_details_consistent(seed, scale):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((3, D)) * scale
    o = build(X, seed=seed)
    res = o.query_details(rng.standard_normal(D) * scale, range(3))
    for r in res:
        assert math.isfinite(r.dst) and r.dst >= 0
        assert np.all(r.estimate.A <= o.params.R)
        defined = r.estimate.q > 0
        assert np.all(r.estimate.A[r.estimate.q[defined] - 1, np.flatnonzero(defined)] >= o.params.threshold)
        assert np.all(r.estimate.eta_hat < 1) and np.all(r.estimate.c >= 0)
