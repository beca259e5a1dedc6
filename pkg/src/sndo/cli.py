"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 data or index error, 3 self-test failure.
"""

from __future__ import annotations

import argparse
import contextlib
import fcntl
import json
import os
import struct
import sys
import time
from pathlib import Path

import numpy as np

from . import experiments, index_file
from .norms import parse_norm
from .oracle import PROFILES, Knobs, Oracle, ParameterError
from .reference import exact_distance

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_SELFTEST = 0, 1, 2, 3

DATASET_MAGIC = b"SNDS"
DATASET_VERSION = 1
_DS_HEAD = struct.Struct("<4sIQQ")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ------------------------------------------------------------------- data io


def write_dataset(path: str | Path, X: np.ndarray) -> None:
    X = np.ascontiguousarray(X, dtype="<f8")
    if X.ndim != 2:
        raise ValueError("dataset must be 2-d")
    Path(path).write_bytes(_DS_HEAD.pack(DATASET_MAGIC, DATASET_VERSION, X.shape[0], X.shape[1]) + X.tobytes())


def read_dataset(path: str | Path) -> np.ndarray:
    """Binary SNDS file or comma-separated text with one point per line."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if data[:4] == DATASET_MAGIC:
        if len(data) < _DS_HEAD.size:
            raise DataError("dataset header truncated")
        _, version, n, d = _DS_HEAD.unpack_from(data)
        if version != DATASET_VERSION:
            raise DataError(f"unsupported dataset version {version}")
        if len(data) - _DS_HEAD.size != 8 * n * d:
            raise DataError("dataset payload length does not match n*d")
        X = np.frombuffer(data, dtype="<f8", offset=_DS_HEAD.size).reshape(n, d).astype(np.float64)
    else:
        X = _parse_text(data.decode("utf-8", errors="replace"))
    if X.size == 0:
        raise DataError("empty dataset")
    if not np.all(np.isfinite(X)):
        raise DataError("dataset contains NaN or infinite values")
    return X


def _parse_text(text: str) -> np.ndarray:
    rows = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            rows.append([float(tok) for tok in line.split(",")])
        except ValueError as exc:
            raise DataError(f"line {lineno}: {exc}") from exc
    if not rows:
        return np.empty((0, 0))
    if len({len(r) for r in rows}) != 1:
        raise DataError("rows have different lengths")
    return np.array(rows)


def read_vector(inline: str | None, path: str | None) -> np.ndarray:
    if (inline is None) == (path is None):
        raise UsageError("give exactly one of an inline vector or a vector file")
    if inline is not None:
        v = _parse_text(inline)
        if v.shape[0] != 1:
            raise DataError("inline vector must be a single comma-separated row")
    else:
        v = read_dataset(path)
        if v.shape[0] != 1:
            raise DataError("vector file must hold exactly one row")
    if not np.all(np.isfinite(v)):
        raise DataError("vector contains NaN or infinite values")
    return v[0]


def parse_subset(text: str | None, n: int) -> list[int]:
    if text is None:
        return list(range(n))
    try:
        idx = sorted({int(tok) for tok in text.split(",") if tok.strip()})
    except ValueError as exc:
        raise UsageError(f"malformed subset {text!r}") from exc
    if any(i < 0 or i >= n for i in idx):
        raise UsageError(f"subset index out of range for n={n}")
    return idx


@contextlib.contextmanager
def locked(path: Path):
    """Exclusive advisory lock on a sidecar file next to `path`."""
    lock = path.with_name(path.name + ".lock")
    with open(lock, "a") as fh:
        fcntl.flock(fh, fcntl.LOCK_EX)
        try:
            yield
        finally:
            fcntl.flock(fh, fcntl.LOCK_UN)


def load_index(path: str) -> tuple[Oracle, int]:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read index {path}: {exc}") from exc
    try:
        return index_file.loads(data), index_file.mode_of(data)
    except index_file.IndexFormatError as exc:
        raise DataError(str(exc)) from exc


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get("SNDO_THREADS", "1")))
    except ValueError:
        return 1


# ---------------------------------------------------------------- reporting


def _num(x: float) -> str:
    return repr(float(x))


def emit_report(out, results, exact=None) -> None:
    out.write("# i,dst,exact,rel_err,ns\n")
    lat, errs = [], []
    for k, r in enumerate(results):
        ns = int(round(r.seconds * 1e9))
        lat.append(ns)
        if exact is None:
            out.write(f"{r.i},{_num(r.dst)},,,{ns}\n")
        else:
            e = exact[k]
            rel = abs(r.dst - e) / e if e > 0 else (0.0 if r.dst == 0 else float("inf"))
            errs.append(rel)
            out.write(f"{r.i},{_num(r.dst)},{_num(e)},{_num(rel)},{ns}\n")
    out.write(summary_line(lat, errs) + "\n")


def summary_line(lat: list[int], errs: list[float]) -> str:
    parts = [f"count={len(lat)}"]
    if lat:
        p50, p95, p99 = np.percentile(lat, [50, 95, 99])
        parts += [f"p50_ns={int(p50)}", f"p95_ns={int(p95)}", f"p99_ns={int(p99)}"]
    if errs:
        q50, q90, qmax = np.quantile(errs, [0.5, 0.9, 1.0])
        parts += [f"rel_err_p50={_num(q50)}", f"rel_err_p90={_num(q90)}", f"rel_err_max={_num(qmax)}"]
    return "# summary " + " ".join(parts)


# ----------------------------------------------------------------- commands


def _knob_overrides(args) -> dict:
    kw = {}
    for name in ("k_R", "k_U", "k_beta", "k_gamma", "k_eps1"):
        val = getattr(args, name)
        if val is not None:
            kw[name] = val
    for item in args.set or []:
        key, sep, val = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects key=value, got {item!r}")
        try:
            kw[key.strip()] = float(val)
        except ValueError as exc:
            raise UsageError(f"--set {key}: not a number") from exc
    return kw


def cmd_build(args, out) -> int:
    X = read_dataset(args.data)
    try:
        norm = parse_norm(args.norm, X.shape[1])
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    knobs = PROFILES[args.profile].with_overrides(**_knob_overrides(args))
    oracle = Oracle.build(X, norm, args.eps, args.delta, args.seed, knobs=knobs, max_bytes=args.max_bytes)
    path = Path(args.out)
    with locked(path):
        index_file.save(oracle, path, materialized=args.materialized)
    out.write(json.dumps(oracle.params.summary(), sort_keys=True) + "\n")
    return EXIT_OK


def cmd_query(args, out) -> int:
    oracle, _ = load_index(args.index)
    q = read_vector(args.q, args.q_file)
    if q.size != oracle.params.d:
        raise DataError(f"dimension mismatch: query has {q.size}, index has {oracle.params.d}")
    S = parse_subset(args.subset, oracle.params.n)
    results = oracle.query_details(q, S, threads=args.threads)
    exact = [exact_distance(oracle.norm, q, oracle.points[i]) for i in S] if args.exact_compare else None
    emit_report(out, results, exact)
    return EXIT_OK


def cmd_update(args, out) -> int:
    path = Path(args.index)
    with locked(path):
        oracle, mode = load_index(args.index)
        z = read_vector(args.z, args.z_file)
        if z.size != oracle.params.d:
            raise DataError(f"dimension mismatch: vector has {z.size}, index has {oracle.params.d}")
        if not 0 <= args.i < oracle.params.n:
            raise UsageError(f"point {args.i} out of range")
        oracle.update_x(args.i, z)
        index_file.save(oracle, path, materialized=(mode == index_file.MATERIALIZED))
    return EXIT_OK


def cmd_estpair(args, out) -> int:
    oracle, _ = load_index(args.index)
    n = oracle.params.n
    if not (0 <= args.i < n and 0 <= args.j < n):
        raise UsageError(f"point index out of range for n={n}")
    r = oracle.est_pair_details(args.i, args.j)
    line = f"{args.i},{args.j},{_num(r.dst)}"
    if args.exact_compare:
        line += f",{_num(exact_distance(oracle.norm, oracle.points[args.i], oracle.points[args.j]))}"
    out.write(line + "\n")
    return EXIT_OK


def cmd_exact(args, out) -> int:
    a = read_vector(args.a, args.a_file)
    b = read_vector(args.b, None) if args.b is not None else np.zeros_like(a)
    if a.shape != b.shape:
        raise DataError("dimension mismatch")
    try:
        norm = parse_norm(args.norm, a.size)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    out.write(_num(exact_distance(norm, a, b)) + "\n")
    return EXIT_OK


def cmd_selftest(args, out) -> int:
    names = args.suite or list(experiments.SUITES)
    ok = True
    for name in names:
        if name not in experiments.SUITES:
            raise UsageError(f"unknown suite {name!r}")
        res = experiments.run_suite(name, args.scale, args.seed)
        out.write(res.line() + "\n")
        out.flush()
        ok &= res.passed
    return EXIT_OK if ok else EXIT_SELFTEST


def cmd_bench(args, out) -> int:
    oracle, _ = load_index(args.index)
    rng = np.random.default_rng(args.seed)
    scale = oracle.points.std(axis=0) + 1e-12
    out.write("# query,ns\n")
    lat = []
    t_all = time.perf_counter()
    for k in range(args.queries):
        q = oracle.points[rng.integers(oracle.params.n)] + rng.standard_normal(oracle.params.d) * scale
        t0 = time.perf_counter()
        oracle.query_all(q, threads=args.threads)
        ns = int((time.perf_counter() - t0) * 1e9)
        lat.append(ns)
        out.write(f"{k},{ns}\n")
    wall = time.perf_counter() - t_all
    line = summary_line(lat, [])
    if lat:
        line += f" threads={args.threads} queries_per_s={_num(len(lat) / wall)}"
    out.write(line + "\n")
    return EXIT_OK


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sndo", description="Sketch-based distance oracle for symmetric norms.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    threads = default_threads()

    b = sub.add_parser("build", help="build an index from a dataset")
    b.add_argument("data")
    b.add_argument("--out", required=True)
    b.add_argument("--norm", required=True)
    b.add_argument("--eps", type=float, required=True)
    b.add_argument("--delta", type=float, default=0.1)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--profile", choices=sorted(PROFILES), default="desk")
    b.add_argument("--set", action="append", metavar="KNOB=VALUE",
                   help=f"override any knob: {', '.join(Knobs.__dataclass_fields__)}")
    for name in ("k_R", "k_U", "k_beta", "k_gamma", "k_eps1"):
        b.add_argument("--" + name.replace("_", "-"), dest=name, type=float)
    b.add_argument("--materialized", action="store_true", help="store counters instead of replaying")
    b.add_argument("--max-bytes", type=float, default=2.5e9, help="refuse larger sketch grids")
    b.set_defaults(func=cmd_build)

    q = sub.add_parser("query", help="estimate distances from a query to stored points")
    q.add_argument("index")
    q.add_argument("--q", help="inline comma-separated vector")
    q.add_argument("--q-file")
    q.add_argument("--subset", help="comma-separated point indices")
    q.add_argument("--exact-compare", action="store_true")
    q.add_argument("--threads", type=int, default=threads)
    q.set_defaults(func=cmd_query)

    u = sub.add_parser("update", help="replace a stored point")
    u.add_argument("index")
    u.add_argument("i", type=int)
    u.add_argument("--z", help="inline comma-separated vector")
    u.add_argument("--z-file")
    u.set_defaults(func=cmd_update)

    e = sub.add_parser("estpair", help="estimate the distance between two stored points")
    e.add_argument("index")
    e.add_argument("i", type=int)
    e.add_argument("j", type=int)
    e.add_argument("--exact-compare", action="store_true")
    e.set_defaults(func=cmd_estpair)

    x = sub.add_parser("exact", help="exact norm of a - b (b defaults to zero)")
    x.add_argument("--norm", required=True)
    x.add_argument("--a", help="inline comma-separated vector")
    x.add_argument("--a-file")
    x.add_argument("--b", help="inline comma-separated vector")
    x.set_defaults(func=cmd_exact)

    s = sub.add_parser("selftest", help="run the statistical suites")
    s.add_argument("--scale", choices=("quick", "full"), default="quick")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--suite", action="append", help="run only the named suite (repeatable)")
    s.set_defaults(func=cmd_selftest)

    bn = sub.add_parser("bench", help="time random queries against an index")
    bn.add_argument("index")
    bn.add_argument("--queries", type=int, default=10)
    bn.add_argument("--threads", type=int, default=threads)
    bn.add_argument("--seed", type=int, default=0)
    bn.set_defaults(func=cmd_bench)
    return p


def main(argv: list[str] | None = None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "threads", 1) < 1:
        parser.error("--threads must be positive")
    if getattr(args, "queries", 0) < 0:
        parser.error("--queries must be nonnegative")
    try:
        return args.func(args, out)
    except (UsageError, ParameterError) as exc:
        print(f"sndo: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ValueError, IndexError) as exc:
        print(f"sndo: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
