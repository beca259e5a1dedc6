"""Distance oracle for symmetric norms built from subsampled heavy-hitter sketches.

Layout
------
Cells are indexed by (r, l, u) with r < R repetitions, subsample levels
l = 1..L (keep probability 2^-l) and u < U parallel copies. Every cell owns a
heavy-hitter sketch with one slot per point plus a query slot; the sketches of
all cells are stored as stacked arrays so encoding and decoding run in bulk.
A cell's state is bit-for-bit the state a standalone `HHBank` built from the
cell seed would reach on the same subsampled vectors (up to summation order).

Query
-----
For each point i the query slot minus slot i is decoded in every cell, the
candidates are verified against the stored subsamples, and the layer sizes
of q - x_i are recovered from how often each layer shows up across the R
repetitions at each subsample level. The answer is the norm of the
recovered layer vector.
"""

from __future__ import annotations

import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import _random
from .heavy_hitter import PHI, THRESHOLD_FLOOR, HHBank, descend_dense, level_delta
from .norm_est import block_ids, bucket_table, bucket_values, coordinate_gaussians, fp_shape
from .norms import (
    LayerClampWarning,
    LayerProfile,
    MmcBound,
    SymNorm,
    layer_exponents,
    layer_vector_norm,
    mmc_bound,
)
from .tail_est import tail_weights

__all__ = [
    "Knobs",
    "PROFILES",
    "OracleParams",
    "ParameterError",
    "LayerEstimate",
    "Oracle",
    "QueryResult",
    "track_probability",
    "miss_probability",
    "size_from_eta",
    "size_from_miss",
    "estimate_layer_sizes",
    "track_threshold",
]


class ParameterError(ValueError):
    pass


@dataclass(frozen=True)
class Knobs:
    """Leading constants of every derived parameter.

    k_track scales the minimum repetition count for a usable level, and
    k_verify scales the boundary slack of candidate verification (0 means
    only strictly inconsistent layer assignments void a set).
    """

    k_eps1: float = 1.0
    k_R: float = 1.0
    k_U: float = 1.0
    k_beta: float = 1.0
    k_gamma: float = 1.0
    k_track: float = 1.0
    k_verify: float = 0.0
    c_T: float = 4.0
    c_m: float = 8.0
    c_t: float = 6.0
    c_cap: float = 8.0
    C0: float = 1000.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not (isinstance(value, (int, float)) and math.isfinite(value)):
                raise ParameterError(f"knob {name} must be a finite number")
            if name == "k_verify":
                if value < 0:
                    raise ParameterError("k_verify must be nonnegative")
            elif value <= 0:
                raise ParameterError(f"knob {name} must be positive")
        if self.C0 < 1000:
            raise ParameterError("C0 must be at least 1000")

    def with_overrides(self, **kw) -> "Knobs":
        unknown = set(kw) - set(asdict(self))
        if unknown:
            raise ParameterError(f"unknown knobs: {sorted(unknown)}")
        return replace(self, **{k: float(v) for k, v in kw.items()})


PROFILES: dict[str, Knobs] = {
    "paper": Knobs(),
    # Desk scale: at n=32, d=512, eps=0.25 this gives R=48, U=1 and beta=1/64
    # for mmc=1, so the survivor cap covers every leaf and decoding reduces to
    # exact recovery of the sampled support; one counter per bucket then
    # suffices. A level is usable once about 64% of repetitions track a layer.
    "desk": Knobs(
        k_R=4.95e-6,
        k_U=0.05,
        k_beta=9.45e5,
        k_gamma=0.5,
        k_track=250.0,
        c_T=0.05,
        c_m=0.02,
        c_t=0.5,
    ),
}


def track_threshold(R: int, delta: float, d: int, k_track: float = 1.0) -> float:
    """Minimum A[l][k] for level l to be usable for layer k."""
    return k_track * R * math.log(1.0 / delta) / (100.0 * max(1.0, math.log2(d)))


@dataclass(frozen=True)
class OracleParams:
    eps: float
    delta: float
    n: int
    d: int
    mmc: float
    xi: float
    knobs: Knobs
    d_pad: int
    log_d: float
    eps1: float
    L: int
    R: int
    U: int
    beta: float
    gamma: float
    alpha: float
    P: int
    eps_hh: float
    threshold: float

    @classmethod
    def derive(cls, n: int, d: int, eps: float, delta: float, mmc: float, knobs: Knobs, xi: float) -> "OracleParams":
        if not (0 < eps < 1):
            raise ParameterError("eps must lie in (0, 1)")
        if not (0 < delta < 1):
            raise ParameterError("delta must lie in (0, 1)")
        if n < 1 or d < 1:
            raise ParameterError("need n >= 1 and d >= 1")
        if not (0.5 <= xi <= 1):
            raise ParameterError("xi must lie in [1/2, 1]")
        L = max(1, math.ceil(math.log2(d)))
        d_pad = 1 << L
        log_d = max(1.0, math.log2(d))
        k = knobs
        eps1 = k.k_eps1 * eps**2 / log_d
        R = math.ceil(k.k_R * eps1**-2 * math.log(max(n, 2) / delta) * log_d**2)
        U = math.ceil(k.k_U * math.log(n * d**2 / delta))
        beta = k.k_beta * eps**5 / (mmc**2 * log_d**5)
        gamma = k.k_gamma * eps
        alpha = 1.0 + gamma * xi
        P = math.ceil(math.log(max(d, 2)) / math.log(alpha))
        if not eps1 < eps:
            raise ParameterError("eps1 must be below eps (reduce k_eps1)")
        if not 0 < beta < 1:
            raise ParameterError(f"beta={beta:.4g} must lie in (0, 1) (adjust k_beta)")
        if not 1 < alpha <= 2:
            raise ParameterError("alpha must lie in (1, 2] (adjust k_gamma)")
        R, U = max(R, 1), max(U, 1)
        thr = track_threshold(R, delta, d, k.k_track)
        if thr > R:
            raise ParameterError("k_track makes the level threshold exceed R")
        return cls(eps, delta, n, d, mmc, xi, knobs, d_pad, log_d, eps1, L, R, U, beta, gamma,
                   alpha, P, math.sqrt(beta), thr)

    def summary(self) -> dict:
        out = {f: getattr(self, f) for f in (
            "eps", "delta", "n", "d", "d_pad", "mmc", "xi", "eps1", "L", "R", "U", "beta",
            "eps_hh", "gamma", "alpha", "P", "threshold")}
        out["knobs"] = asdict(self.knobs)
        return out


# ------------------------------------------------------- layer-size recovery


def track_probability(q, b):
    """eta = 1 - (1 - 2^-q)^b: chance a level-q subsample keeps one of b coordinates."""
    return -np.expm1(np.asarray(b, dtype=np.float64) * np.log1p(-np.exp2(-np.asarray(q, dtype=np.float64))))


def miss_probability(q, b):
    """1 - eta, kept separately because eta rounds to 1 long before 1 - eta underflows."""
    return np.exp(np.asarray(b, dtype=np.float64) * np.log1p(-np.exp2(-np.asarray(q, dtype=np.float64))))


def size_from_miss(miss, q):
    """Invert miss_probability: log(1 - eta) / log(1 - 2^-q)."""
    return np.log(np.asarray(miss, dtype=np.float64)) / np.log1p(-np.exp2(-np.asarray(q, dtype=np.float64)))


def size_from_eta(eta, q):
    return np.log1p(-np.asarray(eta, dtype=np.float64)) / np.log1p(-np.exp2(-np.asarray(q, dtype=np.float64)))


@dataclass
class LayerEstimate:
    exponents: np.ndarray  # layer exponent for each column
    A: np.ndarray  # (L, P) counts, row l-1 is level l
    q: np.ndarray  # (P,) chosen level, 0 when undefined
    eta_hat: np.ndarray
    c: np.ndarray

    def profile(self, alpha: float, dim: int) -> LayerProfile:
        if self.exponents.size == 0:
            return LayerProfile(alpha, 0, np.empty(0), dim)
        lo, hi = int(self.exponents.min()), int(self.exponents.max())
        counts = np.zeros(hi - lo + 1)
        counts[self.exponents - lo] = self.c
        return LayerProfile(alpha, lo, counts, dim)


def estimate_layer_sizes(A: np.ndarray, R: int, threshold: float, eps1: float,
                         exponents: np.ndarray | None = None) -> LayerEstimate:
    """q_k = deepest level whose count clears the threshold; c_k inverts the track probability there."""
    A = np.asarray(A)
    Lv, P = A.shape
    if exponents is None:
        exponents = np.arange(P)
    ok = A >= threshold
    any_ok = ok.any(axis=0)
    deepest = Lv - np.argmax(ok[::-1], axis=0)  # 1-based level
    q = np.where(any_ok, deepest, 0)
    a_q = np.where(any_ok, A[np.maximum(q - 1, 0), np.arange(P)], 0).astype(np.float64)
    scale = R * (1.0 + eps1)
    eta_hat = a_q / scale
    c = np.zeros(P)
    if any_ok.any():
        miss = (scale - a_q[any_ok]) / scale
        c[any_ok] = size_from_miss(miss, q[any_ok])
    return LayerEstimate(np.asarray(exponents), A, q, eta_hat, c)


@dataclass
class QueryResult:
    i: int
    dst: float
    estimate: LayerEstimate
    voided: int = 0
    overflow: int = 0
    clamped: bool = False
    seconds: float = 0.0


# ------------------------------------------------------------------ oracle


class Oracle:
    """Build with `Oracle.build`; query with `query_all`, `query_set`, `est_pair`."""

    def __init__(self, points: np.ndarray, norm: SymNorm, params: OracleParams, seed: int,
                 mmc: MmcBound, *, encode: bool = True):
        self.points = np.array(points, dtype=np.float64)
        self.norm = norm
        self.params = params
        self.seed = int(seed)
        self.mmc = mmc
        self._setup_geometry()
        self._setup_randomness()
        self.xbar[:] = self.points[:, self.pair_coord]
        if encode:
            self._encode_points()

    # ---------------------------------------------------------- construction

    @classmethod
    def build(cls, points, norm: SymNorm, eps: float, delta: float, seed: int, *,
              knobs: Knobs | None = None, profile: str | None = None, mmc: MmcBound | None = None,
              max_bytes: float = 2.5e9, **overrides) -> "Oracle":
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ParameterError("points must be a non-empty n x d array")
        if not np.all(np.isfinite(pts)):
            raise ParameterError("points must be finite")
        n, d = pts.shape
        norm.check_dim(d)
        if knobs is None:
            knobs = PROFILES[profile or "paper"]
        if overrides:
            knobs = knobs.with_overrides(**overrides)
        if mmc is None:
            mmc = mmc_bound(norm, d)
        xi = 0.5 + 0.5 * float(_random.uniform(_random.derive_key(seed, "xi"), 0))
        params = OracleParams.derive(n, d, eps, delta, mmc.value, knobs, xi)
        need = cls.state_bytes(params)
        if need > max_bytes:
            raise ParameterError(
                f"sketch grid needs about {need / 1e9:.3g} GB (R={params.R}, U={params.U}, "
                f"eps_hh={params.eps_hh:.3g}); use a smaller profile or raise max_bytes")
        return cls(pts, norm, params, seed, mmc)

    @staticmethod
    def geometry(params: OracleParams) -> dict:
        p, k = params, params.knobs
        Lh = p.d_pad.bit_length() - 1
        n_slots = p.n + 2
        T, m, R_est = fp_shape(n_slots, level_delta(p.eps_hh, p.delta, p.d_pad), PHI, p.eps_hh**2, k.c_T, k.c_m)
        nb = [min(R_est, 1 << lv) for lv in range(Lh + 1)]
        m_t = max(1, math.ceil(k.c_t * math.log(n_slots / p.delta)))
        return dict(Lh=Lh, n_slots=n_slots, T=T, m=m, R_est=R_est, nb=nb, m_t=m_t,
                    k_tail=math.ceil(1.0 / p.eps_hh**2 - 1e-12),
                    cap=math.ceil(k.c_cap / p.eps_hh**2 - 1e-9),
                    cells=p.R * p.L * p.U)

    @classmethod
    def state_bytes(cls, params: OracleParams) -> float:
        g = cls.geometry(params)
        per_slot = sum(g["T"] * b * g["m"] for b in g["nb"]) + g["m_t"]
        return 8.0 * g["cells"] * (params.n + 1) * per_slot

    def _setup_geometry(self) -> None:
        p = self.params
        g = self.geometry(p)
        self.Lh, self.T, self.m, self.R_est = g["Lh"], g["T"], g["m"], g["R_est"]
        self.nb, self.m_t, self.k_tail, self.cap = g["nb"], g["m_t"], g["k_tail"], g["cap"]
        self.n_cells = g["cells"]
        cell = np.arange(self.n_cells)
        self.cell_r = cell // (p.L * p.U)
        self.cell_level = (cell // p.U) % p.L + 1
        self.cell_u = cell % p.U

    def cell_index(self, r: int, l: int, u: int) -> int:
        p = self.params
        if not (0 <= r < p.R and 1 <= l <= p.L and 0 <= u < p.U):
            raise IndexError("cell out of range")
        return (r * p.L + (l - 1)) * p.U + u

    def cell_seed(self, c: int) -> int:
        return _random.derive_key(self.seed, "cell", int(self.cell_r[c]), int(self.cell_level[c]), int(self.cell_u[c]))

    def _setup_randomness(self) -> None:
        p = self.params
        C = self.n_cells
        seeds = [self.cell_seed(c) for c in range(C)]
        self.hash_keys, self.gauss_keys = [], []
        for lv in range(self.Lh + 1):
            lvl = [_random.derive_key(s, "level", lv) for s in seeds]
            self.hash_keys.append(np.array([_random.derive_key(s, "fp-hash") for s in lvl], dtype=np.uint64))
            self.gauss_keys.append(np.array([_random.derive_key(s, "fp-gauss") for s in lvl], dtype=np.uint64))
        tails = [_random.derive_key(s, "tail") for s in seeds]
        self.bern_keys = np.array([_random.derive_key(s, "tail-bern") for s in tails], dtype=np.uint64)
        self.tgauss_keys = np.array([_random.derive_key(s, "tail-gauss") for s in tails], dtype=np.uint64)
        self.tables = [bucket_table(self.hash_keys[lv], lv, self.T, self.nb[lv]) for lv in range(self.Lh + 1)]
        # shared subsampling bitmap; padding coordinates are never sampled
        bkey = _random.derive_key(self.seed, "bmap")
        pos = np.arange(C, dtype=np.uint64)[:, None] * np.uint64(p.d_pad) + np.arange(p.d_pad, dtype=np.uint64)
        keep = _random.uniform(bkey, pos) < np.exp2(-self.cell_level.astype(np.float64))[:, None]
        keep[:, p.d:] = False
        self.bmap = keep
        self.pair_cell, self.pair_coord = np.nonzero(keep)
        self.pair_index = np.full((C, p.d_pad), -1, dtype=np.int64)
        self.pair_index[self.pair_cell, self.pair_coord] = np.arange(self.pair_cell.size)
        self.counters = [np.zeros((C, p.n + 1, self.T, self.nb[lv], self.m)) for lv in range(self.Lh + 1)]
        self.tail_y = np.zeros((C, p.n + 1, self.m_t))
        self.xbar = np.zeros((p.n, self.pair_cell.size))

    # -------------------------------------------------------------- encoding

    def _encode_pairs(self, pidx: np.ndarray, vals: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
        """Sketch contributions of values on pairs `pidx` for S slots; vals is (S, len(pidx))."""
        C, T, m = self.n_cells, self.T, self.m
        S = vals.shape[0]
        cells = self.pair_cell[pidx]
        coords = self.pair_coord[pidx]
        s_ax = np.arange(S)[None, :, None, None]
        t_ax = np.arange(T)[None, None, :, None]
        z_ax = np.arange(m)[None, None, None, :]
        out = []
        for lv in range(self.Lh + 1):
            nb = self.nb[lv]
            xi = block_ids(coords, self.params.d_pad, lv)
            b = self.tables[lv][cells[:, None], np.arange(T)[None, :], xi[:, None]]  # (P, T)
            g = coordinate_gaussians(self.gauss_keys[lv][cells], coords, T, m)  # (P, T, m)
            idx = (((cells[:, None, None, None] * S + s_ax) * T + t_ax) * nb + b[:, None, :, None]) * m + z_ax
            w = vals.T[:, :, None, None] * g[:, None, :, :]
            size = C * S * T * nb * m
            out.append(np.bincount(idx.ravel(), w.ravel(), size).reshape(C, S, T, nb, m))
        tw = tail_weights(self.bern_keys[cells], self.tgauss_keys[cells], coords, self.m_t, self.k_tail)
        idx = (cells[:, None, None] * S + np.arange(S)[None, :, None]) * self.m_t + np.arange(self.m_t)
        w = vals.T[:, :, None] * tw[:, None, :]
        tail = np.bincount(idx.ravel(), w.ravel(), C * S * self.m_t).reshape(C, S, self.m_t)
        return out, tail

    def _encode_points(self) -> None:
        n = self.params.n
        if self.pair_cell.size == 0:
            return
        # chunk the slots to bound temporary memory
        step = max(1, int(4e6 // max(1, self.pair_cell.size * self.T * self.m)))
        allp = np.arange(self.pair_cell.size)
        for s0 in range(0, n, step):
            s1 = min(n, s0 + step)
            lv_counts, tail = self._encode_pairs(allp, self.xbar[s0:s1])
            for lv in range(self.Lh + 1):
                self.counters[lv][:, s0:s1] = lv_counts[lv]
            self.tail_y[:, s0:s1] = tail

    def _encode_query(self, q: np.ndarray) -> tuple[list[np.ndarray], np.ndarray, np.ndarray]:
        qbar = q[self.pair_coord]
        if self.pair_cell.size == 0:
            zero = [np.zeros((self.n_cells, self.T, nb, self.m)) for nb in self.nb]
            return zero, np.zeros((self.n_cells, self.m_t)), qbar
        lv_counts, tail = self._encode_pairs(np.arange(self.pair_cell.size), qbar[None, :])
        return [c[:, 0] for c in lv_counts], tail[:, 0], qbar

    # ---------------------------------------------------------- public ops

    def _check_vector(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (self.params.d,):
            raise ValueError(f"dimension mismatch: expected length {self.params.d}")
        if not np.all(np.isfinite(v)):
            raise ValueError("vector must be finite")
        return v

    def update_x(self, i: int, z) -> None:
        """Replace point i by z, encoding only the change on sampled coordinates."""
        if not 0 <= i < self.params.n:
            raise IndexError(f"point {i} out of range")
        z = self._check_vector(z)
        delta = z - self.points[i]
        pidx = np.flatnonzero(delta[self.pair_coord] != 0)
        if pidx.size:
            lv_counts, tail = self._encode_pairs(pidx, delta[self.pair_coord[pidx]][None, :])
            for lv in range(self.Lh + 1):
                self.counters[lv][:, i] += lv_counts[lv][:, 0]
            self.tail_y[:, i] += tail[:, 0]
        self.xbar[i] = z[self.pair_coord]
        self.points[i] = z

    def query_all(self, q, *, threads: int = 1) -> np.ndarray:
        return self.query_set(q, range(self.params.n), threads=threads)

    def query_set(self, q, S, *, threads: int = 1) -> np.ndarray:
        return np.array([r.dst for r in self.query_details(q, S, threads=threads)])

    def query_details(self, q, S, *, threads: int = 1) -> list[QueryResult]:
        q = self._check_vector(q)
        idx = self._check_indices(S)
        qc, qt, qbar = self._encode_query(q)

        def rows(chunk):
            lv = [qc[l][:, None] - self.counters[l][:, chunk] for l in range(self.Lh + 1)]
            tail = qt[:, None] - self.tail_y[:, chunk]
            vals = qbar[None, :] - self.xbar[chunk]
            return lv, tail, vals

        return self._run(idx, rows, threads)

    def est_pair(self, i: int, j: int) -> float:
        return self.est_pair_details(i, j).dst

    def est_pair_details(self, i: int, j: int) -> QueryResult:
        i, j = (int(v) for v in self._check_indices([i, j]))

        def rows(chunk):
            lv = [self.counters[l][:, [j]] - self.counters[l][:, [i]] for l in range(self.Lh + 1)]
            tail = self.tail_y[:, [j]] - self.tail_y[:, [i]]
            vals = self.xbar[[j]] - self.xbar[[i]]
            return lv, tail, vals

        res = self._run(np.array([i]), rows, 1)[0]
        return res

    def _check_indices(self, S) -> np.ndarray:
        idx = np.asarray(list(S), dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= self.params.n):
            raise IndexError("point index out of range")
        return idx

    # -------------------------------------------------------------- decoding

    def _chunk_size(self) -> int:
        per_row = self.n_cells * self.T * (self.params.d_pad + sum(self.nb) * self.m)
        return max(1, int(6e6 // max(1, per_row)))

    def _run(self, idx: np.ndarray, rows, threads: int) -> list[QueryResult]:
        step = self._chunk_size()
        chunks = [idx[s:s + step] for s in range(0, idx.size, step)]

        def work(chunk):
            t0 = time.perf_counter()
            out = self._decode_chunk(chunk, *rows(chunk))
            dt = (time.perf_counter() - t0) / max(1, len(chunk))
            for r in out:
                r.seconds = dt
            return out

        if threads > 1 and len(chunks) > 1:
            with ThreadPoolExecutor(threads) as pool:
                parts = list(pool.map(work, chunks))
        else:
            parts = [work(c) for c in chunks]
        return [r for part in parts for r in part]

    def _leaf_candidates(self, lv_diff: list[np.ndarray], tail_diff: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Decode every (cell, row): leaf survivor mask (C, B, d_pad) and overflow flags (C, B)."""
        C, B = tail_diff.shape[:2]
        thr = np.maximum(0.75 * self.params.eps_hh**2 * self.k_tail * np.median(tail_diff**2, axis=-1),
                         THRESHOLD_FLOOR)
        level_est = []
        for lv, diff in enumerate(lv_diff):
            vals = bucket_values(diff)  # (C, B, T, nb)
            tab = np.broadcast_to(self.tables[lv][:, None], (C, B, self.T, 1 << lv))
            per_rep = np.take_along_axis(vals, tab, axis=3)
            est = per_rep[:, :, 0] if self.T == 1 else np.median(per_rep, axis=2)
            level_est.append(est.reshape(C * B, -1))
        mask, over = descend_dense(level_est, thr.ravel(), self.cap)
        return mask.reshape(C, B, -1), over.reshape(C, B)

    def _decode_chunk(self, chunk: np.ndarray, lv_diff, tail_diff, pair_vals) -> list[QueryResult]:
        p = self.params
        C, B = self.n_cells, len(chunk)
        mask, over = self._leaf_candidates(lv_diff, tail_diff)
        # verification against the stored subsamples
        c_idx, b_idx, j_idx = np.nonzero(mask)
        pidx = self.pair_index[c_idx, j_idx]
        sampled = pidx >= 0
        c_idx, b_idx, pidx = c_idx[sampled], b_idx[sampled], pidx[sampled]
        value = np.abs(pair_vals[b_idx, pidx])
        nz = value > 0  # zero-valued candidates are false positives
        c_idx, b_idx, value = c_idx[nz], b_idx[nz], value[nz]
        w = layer_exponents(value, p.alpha)
        slack = 1.0 + p.knobs.k_verify * p.eps
        bad = np.power(p.alpha, (w - 1).astype(np.float64)) * slack >= value
        void = np.zeros((C, B), dtype=bool)
        void[c_idx[bad], b_idx[bad]] = True
        # good set per (r, l, row): the first non-void u
        void_rlu = void.reshape(p.R, p.L, p.U, B)
        first_u = np.argmax(~void_rlu, axis=2)  # (R, L, B)
        has_good = (~void_rlu).any(axis=2)
        chosen = has_good[self.cell_r[c_idx], self.cell_level[c_idx] - 1, b_idx] & (
            first_u[self.cell_r[c_idx], self.cell_level[c_idx] - 1, b_idx] == self.cell_u[c_idx])
        r_sel = self.cell_r[c_idx[chosen]]
        l_sel = self.cell_level[c_idx[chosen]]
        b_sel = b_idx[chosen]
        w_sel = w[chosen]
        results = []
        if w_sel.size:
            w_lo = int(w_sel.min())
            P = int(w_sel.max()) - w_lo + 1
            key = ((b_sel * p.L + (l_sel - 1)) * P + (w_sel - w_lo)) * p.R + r_sel
            key = np.unique(key)  # one vote per repetition r
            A_all = np.bincount(key // p.R, minlength=B * p.L * P).reshape(B, p.L, P)
        for row, i in enumerate(chunk):
            if w_sel.size:
                A = A_all[row]
                cols = np.flatnonzero(A.any(axis=0))
                est = estimate_layer_sizes(A[:, cols], p.R, p.threshold, p.eps1, cols + w_lo)
            else:
                est = estimate_layer_sizes(np.zeros((p.L, 0), dtype=np.int64), p.R, p.threshold, p.eps1)
            prof = est.profile(p.alpha, p.d)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", LayerClampWarning)
                dst = layer_vector_norm(self.norm, prof)
            results.append(QueryResult(int(i), float(dst), est,
                                       voided=int(void[:, row].sum()), overflow=int(over[:, row].sum()),
                                       clamped=bool(prof.meta.get("clamped", False))))
        return results

    # ------------------------------------------------------- introspection

    def cell_bank(self, r: int, l: int, u: int) -> HHBank:
        """A standalone sketch with this cell's seed, fed the cell's stored subsamples."""
        c = self.cell_index(r, l, u)
        p, k = self.params, self.params.knobs
        bank = HHBank.create(p.eps_hh, p.n + 2, p.d_pad, p.delta, self.cell_seed(c),
                             c_T=k.c_T, c_m=k.c_m, c_t=k.c_t, c_cap=k.c_cap, C0=k.C0)
        for i in range(p.n):
            bank.encode(i, self.subsample(i, c))
        return bank

    def subsample(self, i: int, c: int) -> np.ndarray:
        """Point i restricted to cell c's bitmap, padded to d_pad."""
        v = np.zeros(self.params.d_pad)
        sel = self.pair_cell == c
        v[self.pair_coord[sel]] = self.xbar[i, sel]
        return v

    def cell_counters(self, c: int, slot: int) -> list[np.ndarray]:
        return [self.counters[lv][c, slot] for lv in range(self.Lh + 1)] + [self.tail_y[c, slot]]
