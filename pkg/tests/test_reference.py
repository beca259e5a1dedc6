import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from sndo.norms import LayerProfile, LpNorm, TopKNorm, layer_profile_exact, parse_norm
from sndo.reference import (classify_layers, exact_distance, exact_heavy_hitters, exact_report,
                            exact_tail_norm, reference_query)

finite = st.floats(-1e6, 1e6, allow_nan=False).filter(lambda z: z == 0 or abs(z) > 1e-6)
vectors = arrays(np.float64, st.integers(1, 40), elements=finite)
norm_specs = st.sampled_from(["lp:1", "lp:2", "lp:3.5", "lp:inf", "topk:3", "ksupport:2", "box:4:0.1",
                              "maxmix:0.5", "summix:0.5"])


def test_distance_examples():
    assert exact_distance(LpNorm(2.0), [1.0, 2.0], [1.0, 2.0]) == 0
    assert exact_distance(LpNorm(2.0), [3.0, 4.0], [0.0, 0.0]) == pytest.approx(5.0)
    assert exact_distance(TopKNorm(2), [1.0, -5.0, 3.0, 2.0], np.zeros(4)) == pytest.approx(8.0)
    with pytest.raises(ValueError):
        exact_distance(LpNorm(2.0), [1.0], [1.0, 2.0])


def test_tail_examples():
    assert exact_tail_norm([3.0, 4.0, 12.0], 1) == pytest.approx(5.0)
    assert exact_tail_norm([3.0, 4.0], 0) == pytest.approx(5.0)
    assert exact_tail_norm([0.0, 3.0, 0.0], 1) == 0
    assert exact_tail_norm([2.0, 1.0, 2.0, 1.0], 1) == pytest.approx(math.sqrt(6))
    with pytest.raises(ValueError):
        exact_tail_norm([1.0], -1)


def test_heavy_examples():
    v = np.zeros(16)
    v[7] = 2.0
    assert list(exact_heavy_hitters(v, 0.3)) == [7]
    assert exact_heavy_hitters(np.zeros(8), 0.3).size == 0
    assert set(exact_heavy_hitters([10.0, 0, 0, 0, 1.0, 0, 0, 0], 0.5)) == {0, 4}
    with pytest.raises(ValueError):
        exact_heavy_hitters(v, 1.0)


def test_classify_single_layer():
    prof = LayerProfile.from_dict(2.0, {3: 5}, 10)
    for beta in (0.01, 0.5, 1.0):
        cls = classify_layers(prof, beta)
        assert cls.important.tolist() == [True]
        assert cls.contributing.tolist() == [True]


def test_classify_two_layers():
    prof = LayerProfile.from_dict(2.0, {1: 100, 5: 1}, 200)
    cls = classify_layers(prof, 0.5)
    assert cls.exponents.tolist() == [1, 5]
    # exponent 5: 1 > 0 and 2^10 >= 0.5 (2^10 + 100 * 2^2)
    assert 2**10 >= 0.5 * (2**10 + 100 * 4)
    # exponent 1 sums only over itself: 400 >= 0.5 * 400, and 100 > 0.5 * 1
    assert cls.important.tolist() == [True, True]
    assert classify_layers(prof, 0.95).important.tolist() == [True, False]


def test_classify_trackable_and_contributing():
    prof = LayerProfile.from_dict(2.0, {0: 20, 4: 1}, 30)
    cls = classify_layers(prof, 0.25)
    # tail(4) of (16, 1 x20) is sqrt(17); 256 >= 0.25*17 and 1 < 0.25*17
    assert cls.trackable.tolist() == [False, True]
    # l2 buckets sqrt(20) and 16 against sqrt(276)
    assert cls.contributing.tolist() == [True, True]
    assert classify_layers(prof, 0.5).contributing.tolist() == [False, True]


def test_reference_query_examples():
    assert reference_query(LpNorm(1.0), [1.5, 3.0], [0.0, 0.0], 2.0) == pytest.approx(6.0)
    assert reference_query(LpNorm(2.0), [1.5, 3.0], [0.0, 0.0], 2.0) == pytest.approx(math.sqrt(20))
    assert reference_query(LpNorm(2.0), [1.0, 2.0], [1.0, 2.0], 1.5) == 0


def test_report():
    v = np.array([0.0, 3.0, -4.0, 0.5])
    rep = exact_report(LpNorm(2.0), v, 2.0, 0.1, 0.5, tail_ks=(1, 2))
    assert rep.distance == pytest.approx(math.sqrt(25.25))
    assert rep.profile.counts.sum() == 3
    assert rep.tail == pytest.approx({1: math.sqrt(9.25), 2: 0.5})
    assert set(rep.heavy) == {1, 2, 3}


@given(v=vectors, alpha=st.floats(1.01, 2.0), spec=norm_specs)
def test_reference_sandwich(v, alpha, spec):
    try:
        norm = parse_norm(spec, v.size)
    except ValueError:
        norm = LpNorm(2.0)
    exact = exact_distance(norm, v, np.zeros_like(v))
    got = reference_query(norm, v, np.zeros_like(v), alpha)
    assert exact * (1 - 1e-9) <= got <= alpha * exact * (1 + 1e-9)


@given(v=vectors, eps=st.floats(0.05, 0.95))
def test_heavy_size_bound(v, eps):
    heavy = exact_heavy_hitters(v, eps)
    assert heavy.size <= 2 / eps**2
    k = math.ceil(1 / eps**2 - 1e-12)
    tail = exact_tail_norm(v, k)
    assert np.all(np.abs(v[heavy]) >= eps * tail)


@given(v=vectors, alpha=st.floats(1.01, 2.0))
def test_profile_counts_nonzeros(v, alpha):
    assert layer_profile_exact(v, alpha).counts.sum() == np.count_nonzero(v)


@given(v=vectors, k=st.integers(0, 50))
def test_tail_monotone(v, k):
    assert exact_tail_norm(v, k + 1) <= exact_tail_norm(v, k) + 1e-12
    if k >= np.count_nonzero(v):
        assert exact_tail_norm(v, k) == 0
