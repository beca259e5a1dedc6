import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from sndo.heavy_hitter import (THRESHOLD_FLOOR, HHBank, decode_threshold, descend_dense, hh_decode,
                               hh_encode, hh_init, hh_subtract, keep_strongest, level_delta)
from sndo.reference import exact_heavy_hitters

small = dict(c_T=0.5, c_m=1.0, c_t=2.0)


def test_shape():
    bank = hh_init(0.5, 2, 8, 0.1, 0)
    assert bank.L == 3 and len(bank.levels) == 4
    assert bank.tail.k == 4
    assert bank.cap == 32
    assert bank.delta_prime == pytest.approx(0.5 * 0.1 / (12 * 3 + 1))
    assert level_delta(0.5, 0.1, 8) == bank.delta_prime


def test_rejects_bad_inputs():
    with pytest.raises(ValueError):
        hh_init(0.5, 1, 12, 0.1, 0)
    with pytest.raises(ValueError):
        hh_init(1.0, 1, 8, 0.1, 0)
    bank = hh_init(0.5, 1, 8, 0.1, 0, **small)
    with pytest.raises(ValueError):
        hh_encode(bank, 0, np.ones(7))
    with pytest.raises(IndexError):
        bank.encode_single(0, 8, 1.0)
    with pytest.raises(ValueError):
        hh_decode(bank, 0, eps_hh=0.3)


def test_threshold_floor():
    assert decode_threshold(0.5, 4, 0.0) == THRESHOLD_FLOOR
    assert decode_threshold(0.5, 4, 2.0) == pytest.approx(0.75 * 0.25 * 4 * 2)


def test_keep_strongest_ties_lower_index():
    idx = np.array([1, 3, 5, 7])
    est = np.array([2.0, 5.0, 5.0, 5.0])
    assert np.array_equal(keep_strongest(idx, est, 2), [3, 5])
    assert np.array_equal(keep_strongest(idx, est, 9), idx)


def test_zero_vector_decodes_empty():
    bank = hh_init(0.5, 1, 64, 0.1, 3, **small)
    out = hh_decode(bank, 0)
    assert len(out) == 0 and not out.overflow


def test_floor_threshold_superset():
    hits = 0
    for seed in range(100):
        bank = hh_init(0.5, 1, 8, 0.1, seed)
        hh_encode(bank, 0, [10.0, 0, 0, 0, 1.0, 0, 0, 0])
        hits += {0, 4} <= set(hh_decode(bank, 0).indices)
    assert set(exact_heavy_hitters([10.0, 0, 0, 0, 1.0, 0, 0, 0], 0.5)) == {0, 4}
    assert hits / 100 >= 0.9


@pytest.mark.parametrize("seed", range(10))
def test_single_spike(seed):
    bank = hh_init(0.5, 1, 64, 0.1, seed)
    v = np.zeros(64)
    v[37] = -3.0
    hh_encode(bank, 0, v)
    assert 37 in hh_decode(bank, 0)


def test_planted_signal():
    rng = np.random.default_rng(5)
    d, hits = 256, 0
    for seed in range(200):
        v = rng.standard_normal(d)
        v *= 0.1 / np.linalg.norm(v)
        j = int(rng.integers(d))
        v[j] = 1.0
        bank = hh_init(0.25, 1, d, 0.1, seed, c_T=0.25, c_m=0.2)
        hh_encode(bank, 0, v)
        assert j in exact_heavy_hitters(v, 0.25)
        hits += j in hh_decode(bank, 0)
    assert hits / 200 >= 0.95


def test_subtract_matches_difference():
    rng = np.random.default_rng(2)
    x, y = rng.standard_normal((2, 32))
    bank = hh_init(0.5, 4, 32, 0.1, 1, **small)
    hh_encode(bank, 0, x)
    hh_encode(bank, 1, y)
    hh_encode(bank, 2, x - y)
    hh_subtract(bank, 3, 0, 1)
    for lv in bank.levels:
        assert np.allclose(lv.counters[3], lv.counters[2], atol=1e-12)
    assert np.allclose(bank.tail.y[3], bank.tail.y[2], atol=1e-12)
    assert np.array_equal(hh_decode(bank, 3).indices, hh_decode(bank, 2).indices)


@settings(max_examples=30)
@given(v=arrays(np.float64, 32, elements=st.floats(-50, 50, allow_nan=False)),
       seed=st.integers(0, 2**63), cap=st.integers(1, 40))
def test_descend_dense_matches_decode(v, seed, cap):
    bank = hh_init(0.5, 1, 32, 0.1, seed, **small)
    bank.cap = cap
    hh_encode(bank, 0, v)
    ref = hh_decode(bank, 0)
    est = [sk.query_blocks(0, np.arange(1 << lv))[None, :] for lv, sk in enumerate(bank.levels)]
    mask, over = descend_dense(est, np.array([ref.threshold]), cap)
    assert np.array_equal(np.flatnonzero(mask[0]), ref.indices)
    assert bool(over[0]) == ref.overflow
    assert len(ref) <= cap
