"""Statistical suites shared by the self-test, the scripts and the acceptance tests.

Each suite returns a `SuiteResult` with a pass flag, the measured rates and
the wall time. Sizes are set by a config dataclass per suite; the `quick`
scale of the self-test shrinks trial counts only.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import index_file
from .heavy_hitter import HHBank
from .norm_est import FpEstSketch
from .norms import (
    LayerProfile,
    LpNorm,
    MaxMixNorm,
    TopKNorm,
    estimate_median,
    heuristic_mc,
    layer_profile_exact,
    layer_vector_norm,
    parse_norm,
)
from .oracle import (
    PROFILES,
    Oracle,
    OracleParams,
    estimate_layer_sizes,
    miss_probability,
    size_from_miss,
    track_probability,
    track_threshold,
)
from .reference import classify_layers, exact_heavy_hitters, exact_tail_norm
from .tail_est import TailSketch

__all__ = [
    "SuiteResult",
    "SandwichConfig",
    "RecoveryConfig",
    "HeavyHitterConfig",
    "TailConfig",
    "FpEstConfig",
    "EndToEndConfig",
    "LinearityConfig",
    "InversionConfig",
    "PersistenceConfig",
    "MmcConfig",
    "layer_sandwich",
    "layer_recovery",
    "hh_completeness",
    "tail_sandwich",
    "fpest_contract",
    "end_to_end",
    "linearity_and_update",
    "inversion_grid",
    "persistence_roundtrip",
    "mmc_brackets",
    "SUITES",
    "run_suite",
]


@dataclass
class SuiteResult:
    name: str
    passed: bool
    seconds: float
    metrics: dict = field(default_factory=dict)

    def line(self) -> str:
        parts = ", ".join(f"{k}={_fmt(v)}" for k, v in self.metrics.items())
        return f"{'PASS' if self.passed else 'FAIL'} {self.name} ({self.seconds:.2f} s) {parts}"


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)


class _Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.t0


# ------------------------------------------------------- 1: layer sandwich


@dataclass
class SandwichConfig:
    trials: int = 1000
    max_dim: int = 256
    seed: int = 0
    rtol: float = 1e-9


def layer_sandwich(cfg: SandwichConfig = SandwichConfig()) -> SuiteResult:
    """||L(v)|| / alpha <= ||v|| <= ||L(v)|| for random vectors, alphas and norms."""
    norms = [LpNorm(1.0), LpNorm(2.0), LpNorm(4.0), TopKNorm(16), MaxMixNorm(0.5)]
    rng = np.random.default_rng(cfg.seed)
    failures = 0
    worst = 0.0
    with _Timer() as t:
        for trial in range(cfg.trials):
            d = int(rng.integers(16, cfg.max_dim + 1))
            v = rng.standard_normal(d) * np.exp(rng.uniform(-3, 3, d))
            v[rng.random(d) < 0.2] = 0.0
            alpha = float(rng.uniform(1.001, 2.0))
            norm = norms[trial % len(norms)]
            exact = norm(v)
            layered = layer_vector_norm(norm, layer_profile_exact(v, alpha))
            tol = cfg.rtol * max(exact, layered)
            lo_gap = layered / alpha - exact
            hi_gap = exact - layered
            worst = max(worst, lo_gap / max(exact, 1e-300), hi_gap / max(exact, 1e-300))
            if lo_gap > tol or hi_gap > tol:
                failures += 1
    return SuiteResult("layer_sandwich", failures == 0, t.seconds,
                       {"trials": cfg.trials, "failures": failures, "worst_rel_violation": worst})


# ------------------------------------------------------ 2: layer recovery


@dataclass
class RecoveryConfig:
    seeds: int = 200
    R: int = 20000
    eps1: float = 0.03
    d: int = 4096
    eps: float = 0.25
    n: int = 32
    track_fraction: float = 0.3
    coverage: float = 0.9
    seed: int = 0


def desk_beta_alpha(eps: float = 0.25, d: int = 512, n: int = 32, mmc: float = 1.0) -> tuple[float, float]:
    """beta and the largest alpha of the desk profile at the acceptance scale."""
    p = OracleParams.derive(n, d, eps, 0.1, mmc, PROFILES["desk"], 1.0)
    return p.beta, p.alpha


def planted_profile(rng: np.random.Generator, alpha: float, d: int) -> LayerProfile:
    """A few well separated layers, growing in size as the value drops."""
    k = int(rng.integers(3, 6))
    gaps = rng.integers(6, 14, size=k)
    exps = 40 - np.cumsum(gaps)
    counts = np.sort(rng.integers(1, 40, size=k)) * (1 + np.arange(k)) ** 2
    counts = np.minimum(counts, d // (2 * k))
    return LayerProfile.from_dict(alpha, {int(e): float(c) for e, c in zip(exps, counts)}, d)


def simulate_counts(profile: LayerProfile, R: int, L: int, eps_hh: float, rng: np.random.Generator) -> np.ndarray:
    """A[l-1, k]: repetitions whose exact heavy-hitter set at level l holds a layer-k value.

    Subsampling is simulated exactly per layer: each repetition keeps a
    Binomial(b_k, 2^-l) number of layer-k coordinates, and membership uses the
    exact heavy-hitter test on the sampled layer vector.
    """
    keep = profile.counts > 0
    b = profile.counts[keep].astype(np.int64)[::-1]  # largest value first
    vals = profile.values[keep][::-1]
    ktail = math.ceil(1.0 / eps_hh**2 - 1e-12)
    A = np.zeros((L, b.size), dtype=np.int64)
    for lv in range(1, L + 1):
        s = rng.binomial(b, 2.0**-lv, size=(R, b.size))
        above = np.cumsum(s, axis=1) - s
        removed = np.clip(ktail - above, 0, s)
        tail2 = ((s - removed) * vals**2).sum(axis=1)
        heavy = (s > 0) & (vals[None, :] >= eps_hh * np.sqrt(tail2)[:, None])
        A[lv - 1] = heavy.sum(axis=0)
    return A[:, ::-1]


def layer_recovery(cfg: RecoveryConfig = RecoveryConfig()) -> SuiteResult:
    """Recovered sizes of planted important layers versus the true sizes."""
    beta, alpha = desk_beta_alpha(cfg.eps, n=cfg.n)
    eps_hh = math.sqrt(beta)
    L = int(math.log2(cfg.d))
    k_track = cfg.track_fraction * 100 * math.log2(cfg.d) / math.log(10.0)
    thr = track_threshold(cfg.R, 0.1, cfg.d, k_track)
    rng = np.random.default_rng(cfg.seed)
    pairs = good = 0
    filtered = exceptions = 0
    with _Timer() as t:
        for _ in range(cfg.seeds):
            prof = planted_profile(rng, alpha, cfg.d)
            cls = classify_layers(prof, beta)
            A = simulate_counts(prof, cfg.R, L, eps_hh, rng)
            b = prof.counts[prof.counts > 0]
            est = estimate_layer_sizes(A, cfg.R, thr, cfg.eps1, cls.exponents)
            for col in np.flatnonzero(cls.important):
                pairs += 1
                c, q = est.c[col], est.q[col]
                if q > 0 and (1 - 2 * cfg.eps1) * b[col] <= c <= b[col]:
                    good += 1
            defined = est.q > 0
            eta_true = track_probability(np.maximum(est.q, 1), b)
            sub = defined & (est.eta_hat <= eta_true)
            filtered += int(sub.sum())
            exceptions += int(np.sum(est.c[sub] > b[sub] * (1 + 1e-12)))
    rate = good / max(pairs, 1)
    return SuiteResult("layer_recovery", rate >= cfg.coverage and exceptions == 0 and pairs > 0, t.seconds,
                       {"pairs": pairs, "coverage": rate, "filtered": filtered, "exceptions": exceptions,
                        "beta": beta, "eps1": cfg.eps1, "R": cfg.R})


# ------------------------------------------------ 3: heavy-hitter recall


@dataclass
class HeavyHitterConfig:
    seeds: int = 200
    d: int = 4096
    eps_hh: float = 0.25
    planted: int = 4
    margin: float = 4.0
    c_T: float = 0.25
    c_m: float = 0.2
    recall: float = 0.95
    delta: float = 0.1
    seed: int = 0


def hh_completeness(cfg: HeavyHitterConfig = HeavyHitterConfig()) -> SuiteResult:
    """Planted coordinates with margin over eps * ||tail||_2 are all decoded."""
    rng = np.random.default_rng(cfg.seed)
    found = total = 0
    max_size = 0
    size_bound = 8.0 / cfg.eps_hh**2
    with _Timer() as t:
        for s in range(cfg.seeds):
            x = rng.standard_normal(cfg.d)
            idx = rng.choice(cfg.d, cfg.planted, replace=False)
            k = math.ceil(1.0 / cfg.eps_hh**2)
            x[idx] = 0.0
            x[idx] = cfg.margin * cfg.eps_hh * np.linalg.norm(x) * rng.choice([-1.0, 1.0], cfg.planted)
            tail = exact_tail_norm(x, k)
            assert np.all(np.abs(x[idx]) >= cfg.margin * cfg.eps_hh * tail)
            assert set(idx) <= set(exact_heavy_hitters(x, cfg.eps_hh))
            bank = HHBank.create(cfg.eps_hh, 1, cfg.d, cfg.delta, cfg.seed * 100003 + s, c_T=cfg.c_T, c_m=cfg.c_m)
            bank.encode(0, x)
            out = bank.decode(0)
            found += int(np.isin(idx, out.indices).sum())
            total += cfg.planted
            max_size = max(max_size, len(out))
    rate = found / total
    T, m = bank.levels[0].T, bank.levels[0].m
    return SuiteResult("hh_completeness", rate >= cfg.recall and max_size <= size_bound, t.seconds,
                       {"recall": rate, "max_size": max_size, "size_bound": size_bound, "T": T, "m": m})


# --------------------------------------------------------- 4: tail sandwich


@dataclass
class TailConfig:
    seeds: int = 500
    d: int = 256
    k: int = 16
    C0: float = 1000.0
    delta: float = 0.1
    seed: int = 0


def tail_sandwich(cfg: TailConfig = TailConfig()) -> SuiteResult:
    """(1/(10k)) ||x_tail(C0 k)||^2 <= V <= (1/k) ||x_tail(k)||^2; the lower side is vacuous when C0 k >= d."""
    rng = np.random.default_rng(cfg.seed)
    ok = 0
    lower_active = cfg.C0 * cfg.k < cfg.d
    with _Timer() as t:
        for s in range(cfg.seeds):
            x = rng.standard_normal(cfg.d) * np.exp(rng.uniform(-2, 2, cfg.d))
            sk = TailSketch.create(1, cfg.k, cfg.C0, cfg.delta, cfg.seed * 100003 + s)
            sk.encode(0, x)
            V = sk.query(0)
            hi = exact_tail_norm(x, cfg.k) ** 2 / cfg.k
            lo = exact_tail_norm(x, math.ceil(cfg.C0 * cfg.k)) ** 2 / (10 * cfg.k) if lower_active else 0.0
            ok += lo <= V <= hi * (1 + 1e-12)
    rate = ok / cfg.seeds
    need = 1 - 2 * cfg.delta
    return SuiteResult("tail_sandwich", rate >= need, t.seconds,
                       {"coverage": rate, "required": need, "lower_bound_checked": lower_active})


# ---------------------------------------------------------- 5: FpEst contract


@dataclass
class FpEstConfig:
    seeds: int = 500
    d: int = 256
    levels: tuple[int, ...] = (0, 2, 4)
    phi: float = 1.0 / 7.0
    eps_fp: float = 0.1
    delta: float = 0.1
    c_T: float = 1.0
    c_m: float = 2.0
    seed: int = 0


def fpest_contract(cfg: FpEstConfig = FpEstConfig()) -> SuiteResult:
    """(1 - phi) F <= V <= (1 + phi)(F + 5 eps_fp ||x||^2) per (seed, block)."""
    rng = np.random.default_rng(cfg.seed)
    ok = total = 0
    with _Timer() as t:
        for s in range(cfg.seeds):
            x = rng.standard_normal(cfg.d) * np.exp(rng.uniform(-1, 1, cfg.d))
            x2 = float(x @ x)
            for lv in cfg.levels:
                sk = FpEstSketch.create(1, cfg.d, lv, cfg.phi, cfg.eps_fp, cfg.delta,
                                        cfg.seed * 100003 + s * 17 + lv, c_T=cfg.c_T, c_m=cfg.c_m)
                sk.encode(0, x)
                nb = 1 << lv
                F = (x.reshape(nb, -1) ** 2).sum(axis=1)
                V = sk.query_blocks(0, np.arange(nb))
                inside = ((1 - cfg.phi) * F <= V) & (V <= (1 + cfg.phi) * (F + 5 * cfg.eps_fp * x2))
                ok += int(inside.sum())
                total += nb
    rate = ok / total
    need = 1 - 2 * cfg.delta
    return SuiteResult("fpest_contract", rate >= need, t.seconds,
                       {"coverage": rate, "required": need, "T": sk.T, "m": sk.m})


# --------------------------------------------------------- 6: end to end


@dataclass
class EndToEndConfig:
    seeds: int = 20
    n: int = 32
    d: int = 512
    norms: tuple[str, ...] = ("lp:1", "lp:2", "topk:16")
    eps: float = 0.25
    delta: float = 0.1
    tolerance: float = 0.3
    coverage: float = 0.9
    profile: str = "desk"
    seed: int = 0


def desk_dataset(n: int, d: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian points with a heavy-tailed scale per coordinate, plus a query."""
    rng = np.random.default_rng(seed)
    scale = np.exp(rng.uniform(-1, 1, d))
    X = rng.standard_normal((n, d)) * scale
    q = rng.standard_normal(d) * scale
    return X, q


def end_to_end(cfg: EndToEndConfig = EndToEndConfig()) -> SuiteResult:
    good = total = 0
    self_zero = True
    per_norm = {}
    with _Timer() as t:
        for name in cfg.norms:
            g = tot = 0
            for s in range(cfg.seeds):
                X, q = desk_dataset(cfg.n, cfg.d, cfg.seed * 7919 + s)
                norm = parse_norm(name, cfg.d)
                oracle = Oracle.build(X, norm, cfg.eps, cfg.delta, cfg.seed * 7919 + s, profile=cfg.profile)
                dst = oracle.query_all(q)
                exact = np.array([norm(q - x) for x in X])
                g += int(np.sum(np.abs(dst - exact) <= cfg.tolerance * exact))
                tot += cfg.n
                i = s % cfg.n
                self_zero &= bool(oracle.query_set(X[i], [i])[0] == 0.0)
            per_norm[name] = g / tot
            good += g
            total += tot
    rate = good / total
    metrics = {"coverage": rate, "self_zero": self_zero}
    metrics.update({f"coverage[{k}]": v for k, v in per_norm.items()})
    return SuiteResult("end_to_end", rate >= cfg.coverage and self_zero, t.seconds, metrics)


# -------------------------------------------------- 7: linearity and update


@dataclass
class LinearityConfig:
    trials: int = 100
    d: int = 64
    eps_hh: float = 0.3
    c_T: float = 0.3
    c_m: float = 0.5
    update_trials: int = 10
    n: int = 16
    d_oracle: int = 256
    norm: str = "lp:2"
    eps: float = 0.25
    tolerance: float = 0.3
    rtol: float = 1e-9
    seed: int = 0


def _bank_arrays(bank: HHBank, slot: int) -> list[np.ndarray]:
    return [sk.counters[slot] for sk in bank.levels] + [bank.tail.y[slot]]


def linearity_and_update(cfg: LinearityConfig = LinearityConfig()) -> SuiteResult:
    """Subtract versus encoding the difference; update_x versus a fresh build."""
    rng = np.random.default_rng(cfg.seed)
    set_mismatch = 0
    worst = 0.0
    update_bad = 0
    with _Timer() as t:
        for s in range(cfg.trials):
            a = rng.standard_normal(cfg.d)
            b = rng.standard_normal(cfg.d)
            a[rng.integers(cfg.d)] += 20.0
            bank = HHBank.create(cfg.eps_hh, 4, cfg.d, 0.1, cfg.seed * 1009 + s, c_T=cfg.c_T, c_m=cfg.c_m)
            bank.encode(0, a)
            bank.encode(1, b)
            bank.subtract(2, 0, 1)
            bank.encode(3, a - b)
            for u, v in zip(_bank_arrays(bank, 2), _bank_arrays(bank, 3)):
                scale = max(np.abs(v).max(), 1e-300)
                worst = max(worst, float(np.abs(u - v).max() / scale))
            if not np.array_equal(bank.decode(2).indices, bank.decode(3).indices):
                set_mismatch += 1
        for s in range(cfg.update_trials):
            X, q = desk_dataset(cfg.n, cfg.d_oracle, 5000 + s)
            norm = parse_norm(cfg.norm, cfg.d_oracle)
            seed = cfg.seed * 1009 + s
            oracle = Oracle.build(X, norm, cfg.eps, 0.1, seed, profile="desk")
            i = s % cfg.n
            z = rng.standard_normal(cfg.d_oracle) * 2.0
            oracle.update_x(i, z)
            X2 = X.copy()
            X2[i] = z
            fresh = Oracle.build(X2, norm, cfg.eps, 0.1, seed, profile="desk")
            got, want = oracle.query_all(q), fresh.query_all(q)
            update_bad += int(np.sum(np.abs(got - want) > cfg.tolerance * np.abs(want)))
    passed = set_mismatch == 0 and worst <= cfg.rtol and update_bad == 0
    return SuiteResult("linearity_and_update", passed, t.seconds,
                       {"trials": cfg.trials, "worst_counter_rel": worst, "set_mismatches": set_mismatch,
                        "update_mismatches": update_bad})


# ----------------------------------------------------- 8: inversion grid


@dataclass
class InversionConfig:
    points: int = 100
    q_range: tuple[int, int] = (1, 10)
    b_range: tuple[float, float] = (1.0, 1000.0)
    tol: float = 1e-9


def inversion_grid(cfg: InversionConfig = InversionConfig()) -> SuiteResult:
    """size_from_miss(miss_probability(q, b), q) = b on a grid of 100 points per axis."""
    with _Timer() as t:
        qs = np.linspace(cfg.q_range[0], cfg.q_range[1], cfg.points)
        bs = np.linspace(cfg.b_range[0], cfg.b_range[1], cfg.points)
        Q, B = np.meshgrid(qs, bs, indexing="ij")
        c = size_from_miss(miss_probability(Q, B), Q)
        err = float(np.max(np.abs(c - B) / B))
    return SuiteResult("inversion_grid", err <= cfg.tol, t.seconds, {"max_rel_err": err, "grid": Q.size})


# ----------------------------------------------------- 9: persistence


@dataclass
class PersistenceConfig:
    seeds: int = 10
    n: int = 16
    d: int = 256
    norm: str = "lp:2"
    eps: float = 0.25
    seed: int = 0


def persistence_roundtrip(cfg: PersistenceConfig = PersistenceConfig()) -> SuiteResult:
    mismatches = 0
    with _Timer() as t:
        for s in range(cfg.seeds):
            X, q = desk_dataset(cfg.n, cfg.d, 9000 + s)
            oracle = Oracle.build(X, parse_norm(cfg.norm, cfg.d), cfg.eps, 0.1, cfg.seed * 31 + s, profile="desk")
            want = oracle.query_all(q)
            loaded = index_file.loads(index_file.dumps(oracle))
            got = loaded.query_all(q)
            if got.tobytes() != want.tobytes():
                mismatches += 1
    return SuiteResult("persistence_roundtrip", mismatches == 0, t.seconds,
                       {"seeds": cfg.seeds, "mismatches": mismatches})


# -------------------------------------------------------- 10: mmc brackets


@dataclass
class MmcConfig:
    d: int = 1024
    ks: tuple[int, ...] = (1, 16, 256)
    trials: int = 201
    seed: int = 0
    bracket: float = 8.0


def mmc_brackets(cfg: MmcConfig = MmcConfig()) -> SuiteResult:
    ratios = {}
    with _Timer() as t:
        for k in cfg.ks:
            mc = heuristic_mc(TopKNorm(k), cfg.d, cfg.trials, cfg.seed, cfg.d)
            ratios[k] = mc / (math.sqrt(cfg.d / k) / math.sqrt(math.log(cfg.d)))
        l2 = estimate_median(LpNorm(2.0), cfg.d, cfg.trials, cfg.seed, cfg.d)
    inside = all(1 / cfg.bracket <= r <= cfg.bracket for r in ratios.values())
    metrics = {f"ratio[k={k}]": r for k, r in ratios.items()}
    metrics["l2_median"] = l2
    return SuiteResult("mmc_brackets", inside and abs(l2 - 1) <= 1e-12, t.seconds, metrics)


SUITES = {
    "layer_sandwich": (layer_sandwich, SandwichConfig),
    "layer_recovery": (layer_recovery, RecoveryConfig),
    "hh_completeness": (hh_completeness, HeavyHitterConfig),
    "tail_sandwich": (tail_sandwich, TailConfig),
    "fpest_contract": (fpest_contract, FpEstConfig),
    "end_to_end": (end_to_end, EndToEndConfig),
    "linearity_and_update": (linearity_and_update, LinearityConfig),
    "inversion_grid": (inversion_grid, InversionConfig),
    "persistence_roundtrip": (persistence_roundtrip, PersistenceConfig),
    "mmc_brackets": (mmc_brackets, MmcConfig),
}

# trial-count reductions for the quick self-test
QUICK = {
    "layer_sandwich": {"trials": 200},
    "layer_recovery": {"seeds": 30},
    "hh_completeness": {"seeds": 20},
    "tail_sandwich": {"seeds": 100},
    "fpest_contract": {"seeds": 50},
    "end_to_end": {"seeds": 2},
    "linearity_and_update": {"trials": 20, "update_trials": 2},
    "persistence_roundtrip": {"seeds": 2},
    "mmc_brackets": {"trials": 101},
}


def run_suite(name: str, scale: str = "full", seed: int = 0) -> SuiteResult:
    fn, cfg_cls = SUITES[name]
    kw = dict(QUICK.get(name, {})) if scale == "quick" else {}
    if "seed" in cfg_cls.__dataclass_fields__:
        kw["seed"] = seed
    return fn(cfg_cls(**kw))
