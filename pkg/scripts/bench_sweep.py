"""Query latency against n (doubling sweep) and thread count.

usage: python3 scripts/bench_sweep.py [--n-max 128] [--threads 1 2 4] [--queries 3]
"""

import argparse
import time

import numpy as np

from sndo import Oracle, parse_norm
from sndo.experiments import desk_dataset


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--d", type=int, default=512)
    ap.add_argument("--n-max", type=int, default=128)
    ap.add_argument("--threads", type=int, nargs="*", default=[1, 2, 4])
    ap.add_argument("--queries", type=int, default=3)
    ap.add_argument("--norm", default="lp:2")
    args = ap.parse_args()
    print("n,threads,build_s,query_ms,per_point_ms")
    n = 8
    while n <= args.n_max:
        X, q = desk_dataset(n, args.d, 0)
        t0 = time.perf_counter()
        o = Oracle.build(X, parse_norm(args.norm, args.d), 0.25, 0.1, 0, profile="desk")
        build_s = time.perf_counter() - t0
        rng = np.random.default_rng(1)
        qs = [q + 0.1 * rng.standard_normal(args.d) for _ in range(args.queries)]
        for th in args.threads:
            t0 = time.perf_counter()
            for v in qs:
                o.query_all(v, threads=th)
            ms = (time.perf_counter() - t0) * 1e3 / len(qs)
            print(f"{n},{th},{build_s:.2f},{ms:.1f},{ms / n:.2f}", flush=True)
        n *= 2


if __name__ == "__main__":
    main()
