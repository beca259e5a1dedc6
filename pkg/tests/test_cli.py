import io
import json

import numpy as np
import pytest

from sndo.cli import DataError, main, parse_subset, read_dataset, write_dataset
from sndo.index_file import MATERIALIZED, load, mode_of

D = 512


def run(*argv):
    out = io.StringIO()
    code = main([str(a) for a in argv], out)
    return code, out.getvalue()


@pytest.fixture(scope="module")
def data():
    return np.random.default_rng(0).standard_normal((4, D))


@pytest.fixture()
def index(tmp_path, data):
    ds = tmp_path / "x.snds"
    write_dataset(ds, data)
    idx = tmp_path / "x.sndo"
    code, out = run("build", ds, "--out", idx, "--norm", "lp:1", "--eps", 0.25, "--seed", 3)
    assert code == 0
    assert json.loads(out)["R"] >= 1
    return idx


def vec(v):
    return "--q=" + ",".join(repr(float(z)) for z in v)


def test_dataset_io(tmp_path, data):
    write_dataset(tmp_path / "a", data)
    assert np.array_equal(read_dataset(tmp_path / "a"), data)
    (tmp_path / "b").write_text("# comment\n1,2,3\n\n4,5,6\n")
    assert read_dataset(tmp_path / "b").tolist() == [[1, 2, 3], [4, 5, 6]]
    for bad in ("1,2\n3\n", "1,nan\n", "", "1,x\n"):
        (tmp_path / "c").write_text(bad)
        with pytest.raises(DataError):
            read_dataset(tmp_path / "c")


def test_parse_subset():
    assert parse_subset("3,1,1", 4) == [1, 3]
    assert parse_subset(None, 2) == [0, 1]


def test_build_identical(tmp_path, index):
    ds = tmp_path / "x.snds"
    again = tmp_path / "y.sndo"
    assert run("build", ds, "--out", again, "--norm", "lp:1", "--eps", 0.25, "--seed", 3)[0] == 0
    assert again.read_bytes() == index.read_bytes()


def test_build_options(tmp_path, index):
    ds = tmp_path / "x.snds"
    out = tmp_path / "m.sndo"
    code, text = run("build", ds, "--out", out, "--norm", "lp:2", "--eps", 0.25, "--materialized",
                     "--set", "k_track=200", "--k-U", 0.05)
    assert code == 0
    assert json.loads(text)["knobs"]["k_track"] == 200
    assert mode_of(out.read_bytes()) == MATERIALIZED


def test_build_errors(tmp_path, index):
    ds = tmp_path / "x.snds"
    base = ["build", ds, "--out", tmp_path / "z.sndo", "--norm", "lp:1"]
    assert run(*base, "--eps", 0)[0] == 1
    assert run(*base, "--eps", 0.25, "--profile", "paper")[0] == 1
    assert run(*base, "--eps", 0.25, "--set", "k_bogus=1")[0] == 1
    assert run("build", ds, "--out", tmp_path / "z.sndo", "--norm", "nope", "--eps", 0.25)[0] == 1
    assert run("build", tmp_path / "missing", "--out", tmp_path / "z.sndo", "--norm", "lp:1", "--eps", 0.25)[0] == 2


def test_query(index, data):
    q = data[2] + 0.1
    code, out = run("query", index, vec(q), "--exact-compare", "--subset", "2,0")
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "# i,dst,exact,rel_err,ns"
    rows = [l.split(",") for l in lines[1:-1]]
    assert [r[0] for r in rows] == ["0", "2"]
    assert float(rows[1][2]) == pytest.approx(0.1 * D)
    assert lines[-1].startswith("# summary count=2 ")
    assert "rel_err_max=" in lines[-1]
    code, out = run("query", index, vec(data[1]))
    rows = [l.split(",") for l in out.splitlines()[1:-1]]
    assert len(rows) == 4 and float(rows[1][1]) == 0.0 and rows[1][2] == ""


def test_query_errors(index, tmp_path):
    assert run("query", index, vec(np.zeros(D - 1)))[0] == 2
    assert run("query", index, vec(np.zeros(D)), "--subset", "9")[0] == 1
    assert run("query", index)[0] == 1
    bad = tmp_path / "bad.sndo"
    blob = bytearray(index.read_bytes())
    blob[30] ^= 0xFF
    bad.write_bytes(bytes(blob))
    assert run("query", bad, vec(np.zeros(D)))[0] == 2
    (tmp_path / "junk").write_text("hello")
    assert run("query", tmp_path / "junk", vec(np.zeros(D)))[0] == 2


def test_update(index, data):
    z = data[0] * 2
    assert run("update", index, 1, "--z=" + ",".join(map(repr, z.tolist())))[0] == 0
    assert np.array_equal(load(index).points[1], z)
    code, out = run("estpair", index, 0, 1, "--exact-compare")
    i, j, est, exact = out.strip().split(",")
    assert (i, j) == ("0", "1") and float(exact) == pytest.approx(np.abs(data[0]).sum())
    assert run("update", index, 9, "--z=" + ",".join(["0"] * D))[0] == 1
    assert run("update", index, 0, "--z=1,2")[0] == 2


def test_estpair(index):
    _, a = run("estpair", index, 0, 3)
    _, b = run("estpair", index, 3, 0)
    assert a.split(",")[2] == b.split(",")[2]
    assert run("estpair", index, 2, 2)[1].strip() == "2,2,0.0"
    assert run("estpair", index, 0, 4)[0] == 1


def test_exact():
    assert run("exact", "--norm", "lp:2", "--a=3,4") == (0, "5.0\n")
    code, out = run("exact", "--norm", "topk:2", "--a=1,-5,3,2", "--b=0,0,0,0")
    assert code == 0 and float(out) == 8.0
    assert run("exact", "--norm", "lp:2", "--a=1,2", "--b=1")[0] == 2


def test_bench(index):
    code, out = run("bench", index, "--queries", 2, "--threads", 2)
    lines = out.splitlines()
    assert code == 0 and lines[0] == "# query,ns" and len(lines) == 4
    assert "threads=2" in lines[-1] and "queries_per_s=" in lines[-1]
    code, out = run("bench", index, "--queries", 0)
    assert out.splitlines()[-1] == "# summary count=0"


def test_selftest():
    code, out = run("selftest", "--suite", "inversion_grid")
    assert code == 0 and out.startswith("PASS inversion_grid")
    assert run("selftest", "--suite", "nope")[0] == 1


def test_usage_errors():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"], io.StringIO())
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["bench", "x", "--threads", "0"], io.StringIO())
    assert exc.value.code == 1
