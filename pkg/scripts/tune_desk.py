"""Sweep desk-profile knobs and report end-to-end accuracy.

For each k_track (and optionally k_beta) value, builds oracles over several
seeds at n=32, d=512, eps=0.25 and prints the mean ratio dst/exact and the
fraction within the tolerance band.

usage: python3 scripts/tune_desk.py [--k-track 60 117 200 250 300] [--norm lp:1] [--seeds 5]
"""

import argparse
import time
from dataclasses import dataclass

import numpy as np

from sndo import PROFILES, Oracle, ParameterError, parse_norm
from sndo.experiments import desk_dataset


@dataclass
class SweepConfig:
    n: int = 32
    d: int = 512
    eps: float = 0.25
    delta: float = 0.1
    seeds: int = 5
    tolerance: float = 0.3


def evaluate(cfg: SweepConfig, norm_spec: str, **overrides) -> dict:
    ratios = []
    for seed in range(cfg.seeds):
        X, q = desk_dataset(cfg.n, cfg.d, seed)
        norm = parse_norm(norm_spec, cfg.d)
        knobs = PROFILES["desk"].with_overrides(**overrides)
        o = Oracle.build(X, norm, cfg.eps, cfg.delta, seed, knobs=knobs)
        exact = np.array([norm(q - x) for x in X])
        ratios.append(o.query_all(q) / exact)
    r = np.concatenate(ratios)
    return dict(mean=float(r.mean()), within=float(np.mean(np.abs(r - 1) <= cfg.tolerance)),
                lo=float(r.min()), hi=float(r.max()), R=o.params.R, beta=o.params.beta)


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--k-track", type=float, nargs="*", default=[60, 117, 200, 250, 300])
    ap.add_argument("--k-beta", type=float, nargs="*", default=[PROFILES["desk"].k_beta])
    ap.add_argument("--norm", default="lp:1")
    ap.add_argument("--seeds", type=int, default=5)
    args = ap.parse_args()
    cfg = SweepConfig(seeds=args.seeds)
    print("k_track,k_beta,R,beta,mean_ratio,within,min,max,seconds")
    for kb in args.k_beta:
        for kt in args.k_track:
            t0 = time.perf_counter()
            try:
                m = evaluate(cfg, args.norm, k_track=kt, k_beta=kb)
            except ParameterError as exc:
                print(f"{kt},{kb},error,{exc}")
                continue
            print(f"{kt},{kb},{m['R']},{m['beta']:.4g},{m['mean']:.4f},{m['within']:.4f},"
                  f"{m['lo']:.4f},{m['hi']:.4f},{time.perf_counter() - t0:.1f}", flush=True)


if __name__ == "__main__":
    main()
