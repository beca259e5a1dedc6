import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from sndo.reference import exact_tail_norm
from sndo.tail_est import TailSketch, tail_init, tail_query, tail_subtract, tail_update

D = 128
vectors = arrays(np.float64, D, elements=st.floats(-100, 100, allow_nan=False))


def test_shape_and_fresh():
    sk = tail_init(4, 4, 1000, 0.1, 0)
    assert sk.m == 23
    assert tail_query(sk, 0) == 0.0


def test_parameter_errors():
    with pytest.raises(ValueError):
        tail_init(1, 4, 999, 0.1, 0)
    with pytest.raises(ValueError):
        tail_init(1, 0, 1000, 0.1, 0)


def test_single_spike_usually_unsampled():
    zeros = 0
    for seed in range(200):
        sk = tail_init(1, 4, 1000, 0.1, seed)
        tail_update(sk, 0, 0, 100.0)
        zeros += tail_query(sk, 0) == 0.0
    assert zeros / 200 >= 0.9


@given(x=vectors, y=vectors, seed=st.integers(0, 2**63))
def test_linearity(x, y, seed):
    sk = tail_init(4, 2, 1000, 0.1, seed)
    sk.encode(0, x)
    sk.encode(1, y)
    sk.encode(2, x - y)
    tail_subtract(sk, 3, 0, 1)
    assert np.allclose(sk.y[3], sk.y[2], rtol=1e-9, atol=1e-9 * max(1.0, np.abs(sk.y[2]).max()))
    tail_subtract(sk, 3, 0, 0)
    assert not np.any(sk.y[3])


@given(j=st.integers(0, D - 1), z=st.floats(-1e3, 1e3, allow_nan=False), seed=st.integers(0, 2**63))
def test_update_roundtrip(j, z, seed):
    sk = tail_init(1, 1, 1000, 0.1, seed)
    sk.encode(0, np.linspace(-5, 5, D))
    before = sk.y.copy()
    tail_update(sk, 0, j, z)
    tail_update(sk, 0, j, -z)
    assert np.allclose(sk.y, before, rtol=0, atol=1e-12 * max(1.0, abs(z)))


def test_upper_bound_coverage():
    rng = np.random.default_rng(0)
    ok = 0
    for seed in range(300):
        x = rng.standard_normal(D)
        sk = tail_init(1, 16, 1000, 0.1, seed)
        sk.encode(0, x)
        ok += tail_query(sk, 0) <= exact_tail_norm(x, 16) ** 2 / 16
    assert ok / 300 >= 0.8


def test_more_reps_never_hurt_coverage():
    rng = np.random.default_rng(1)
    xs = [rng.standard_normal(D) * np.exp(rng.uniform(-2, 2, D)) for _ in range(200)]

    def coverage(c_t):
        ok = 0
        for seed, x in enumerate(xs):
            sk = TailSketch.create(1, 2, 1000, 0.1, seed, c_t=c_t)
            sk.encode(0, x)
            ok += sk.query(0) <= exact_tail_norm(x, 2) ** 2 / 2
        return ok / len(xs)

    assert coverage(12.0) >= coverage(6.0) - 0.02
