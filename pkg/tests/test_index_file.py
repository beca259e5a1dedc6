import numpy as np
import pytest

from sndo import Oracle, parse_norm
from sndo.index_file import (MATERIALIZED, REPLAYABLE, IndexFormatError, dumps, load, loads, mode_of,
                             save)
from sndo.norms import CustomNorm, OrliczNorm

D = 512


@pytest.fixture(scope="module")
def oracle():
    X = np.random.default_rng(0).standard_normal((4, D))
    return Oracle.build(X, parse_norm("topk:16"), 0.25, 0.1, 7, profile="desk")


def same_state(a, b):
    return (all(np.array_equal(x, y) for x, y in zip(a.counters, b.counters))
            and np.array_equal(a.tail_y, b.tail_y) and np.array_equal(a.points, b.points)
            and np.array_equal(a.bmap, b.bmap) and a.params == b.params)


@pytest.mark.parametrize("materialized", [False, True])
def test_roundtrip(oracle, materialized, tmp_path):
    path = tmp_path / "idx.sndo"
    save(oracle, path, materialized)
    back = load(path)
    assert mode_of(path.read_bytes()) == (MATERIALIZED if materialized else REPLAYABLE)
    assert same_state(oracle, back)
    assert back.norm.descriptor == oracle.norm.descriptor
    q = np.random.default_rng(1).standard_normal(D)
    assert np.array_equal(back.query_all(q), oracle.query_all(q))
    assert not (tmp_path / "idx.sndo.tmp").exists()


def test_bytes_deterministic(oracle):
    again = Oracle.build(oracle.points, parse_norm("topk:16"), 0.25, 0.1, 7, profile="desk")
    assert dumps(again) == dumps(oracle)
    assert dumps(again, True) == dumps(oracle, True)
    assert dumps(oracle).startswith(b"SNDO")


def test_materialized_keeps_updates(oracle):
    o = loads(dumps(oracle))
    o.update_x(0, np.ones(D))
    assert same_state(loads(dumps(o, True)), o)
    replay = loads(dumps(o))
    assert np.array_equal(replay.points, o.points)
    for a, b in zip(replay.counters, o.counters):
        assert np.allclose(a, b, rtol=1e-9, atol=1e-9 * np.abs(b).max())


def test_corruption(oracle):
    blob = bytearray(dumps(oracle))
    with pytest.raises(IndexFormatError, match="not an index"):
        loads(b"JUNK" + bytes(blob[4:]))
    with pytest.raises(IndexFormatError, match="checksum"):
        flipped = bytearray(blob)
        flipped[40] ^= 1
        loads(bytes(flipped))
    with pytest.raises(IndexFormatError):
        loads(bytes(blob[:-100]))
    with pytest.raises(IndexFormatError):
        loads(b"SNDO")
    with pytest.raises(IndexFormatError):
        mode_of(b"abc")


def test_orlicz_roundtrip():
    norm = OrliczNorm(np.array([1.0, 2.0, 3.0]), np.array([1.0, 3.0, 7.0]), source="grid.csv")
    X = np.random.default_rng(2).standard_normal((2, D))
    o = Oracle.build(X, norm, 0.25, 0.1, 3, profile="desk")
    back = loads(dumps(o))
    assert isinstance(back.norm, OrliczNorm)
    assert np.array_equal(back.norm.xs, norm.xs) and back.norm.growth == norm.growth
    assert same_state(o, back)


def test_custom_norm_refused():
    norm = CustomNorm(lambda v: float(np.abs(v).sum()), mmc=1.0)
    o = Oracle.build(np.ones((2, D)), norm, 0.25, 0.1, 0, profile="desk")
    with pytest.raises(ValueError, match="custom"):
        dumps(o)
