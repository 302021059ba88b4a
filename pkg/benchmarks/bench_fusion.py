"""Benchmark the region fusion kernel: compiled extension vs pure Python.

Usage:  python3 benchmarks/bench_fusion.py [--sizes 500,1000,2000,4000]

Both backends run the identical algorithm and must return identical
labelings; the table reports median wall time per backend and the speedup.
"""

import argparse
import time

import numpy as np

from cseg._kernels import fusion_py

try:
    from cseg._kernels import _fusion as fusion_c
except ImportError:
    fusion_c = None


def grid_instance(nodes, rng, n_seeds):
    cols = 50
    rows = nodes // cols
    n = cols * rows
    features = rng.random((n, 3))
    sizes = rng.integers(1, 9, n).astype(np.int64)
    us, vs, gs = [], [], []
    for y in range(rows):
        for x in range(cols):
            i = y * cols + x
            if x + 1 < cols:
                us.append(i), vs.append(i + 1), gs.append(int(rng.integers(1, 5)))
            if y + 1 < rows:
                us.append(i), vs.append(i + cols), gs.append(int(rng.integers(1, 5)))
    seeds = np.full(n, -1, dtype=np.int64)
    for idx, v in enumerate(rng.choice(n, size=n_seeds, replace=False)):
        seeds[v] = idx
    return (
        features,
        sizes,
        np.array(us, dtype=np.int64),
        np.array(vs, dtype=np.int64),
        np.array(gs, dtype=np.int64),
        seeds,
    )


def bench(backend, args_list, reps=5):
    times = []
    for args in args_list:
        per = []
        for _ in range(reps):
            t0 = time.perf_counter()
            backend.fuse(*args, 2.0, 1000, True)
            per.append(time.perf_counter() - t0)
        times.append(min(per))
    return float(np.median(times))


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--sizes", default="500,1000,2000,4000")
    parser.add_argument("--instances", type=int, default=3)
    args = parser.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]

    print(f"{'nodes':>8} {'python (ms)':>14} {'compiled (ms)':>14} {'speedup':>9}")
    for nodes in sizes:
        instances = [
            grid_instance(nodes, np.random.default_rng(100 + i), max(2, nodes // 500))
            for i in range(args.instances)
        ]
        t_py = bench(fusion_py, instances)
        if fusion_c is None:
            print(f"{nodes:>8} {t_py * 1e3:>14.2f} {'unavailable':>14} {'-':>9}")
            continue
        t_c = bench(fusion_c, instances)
        for inst in instances:
            a = fusion_py.fuse(*inst, 2.0, 1000, True)
            b = fusion_c.fuse(*inst, 2.0, 1000, True)
            assert np.array_equal(a[0], b[0]), "backends disagree"
        print(
            f"{nodes:>8} {t_py * 1e3:>14.2f} {t_c * 1e3:>14.2f} "
            f"{t_py / t_c:>8.1f}x"
        )


if __name__ == "__main__":
    main()
