"""Time the numba kernels against the numpy fallback on experiment-sized inputs.

    python benchmarks/bench_kernels.py --repeat 5

Numba compile time is paid in a warm-up call and excluded from the timings.
"""

import argparse
import json
import timeit

import numpy as np

from railfd import kernels


def cases(rng):
    x = rng.standard_normal((32, 16, 512)).astype(np.float32)
    w = rng.standard_normal((16, 16, 10)).astype(np.float32)
    b = np.zeros(16, dtype=np.float32)
    y = kernels.load("numpy").conv1d_forward(x, w, b, 2, 5)
    g = rng.standard_normal(y.shape).astype(np.float32)
    feats = rng.standard_normal((64, 4))
    dist = np.sqrt(((feats[:, None] - feats[None]) ** 2).sum(-1))
    labels = rng.integers(0, 4, 64).astype(np.int64)
    svm_x = rng.standard_normal((400, 4))
    health = np.abs(rng.standard_normal(5000))
    return {
        "conv1d_forward (32x16x512, k10 s2)": lambda m: m.conv1d_forward(x, w, b, 2, 5),
        "conv1d_backward": lambda m: m.conv1d_backward(x, w, g, 2, 5),
        "semi_hard_select (batch 64)": lambda m: m.semi_hard_select(dist, labels, 1.0),
        "smo_solve (n=400, d=4)": lambda m: m.smo_solve(svm_x, 0.25, 1 / (0.05 * 400), 1e-4, 1_000_000),
        "first_median_exceed (5000, w5)": lambda m: m.first_median_exceed(health, 5, 10.0),
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--json", help="also write the timings to this file")
    args = parser.parse_args(argv)

    backends = {name: kernels.load(name) for name in ("numpy", "numba")}
    rows = {}
    for label, fn in cases(np.random.default_rng(args.seed)).items():
        row = {}
        for name, mod in backends.items():
            fn(mod)  # warm-up / JIT compile
            row[name] = min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat))
        rows[label] = row

    print(f"{'kernel':38s} {'numpy [ms]':>11s} {'numba [ms]':>11s} {'speed-up':>9s}")
    for label, row in rows.items():
        print(f"{label:38s} {1e3 * row['numpy']:11.2f} {1e3 * row['numba']:11.2f} {row['numpy'] / row['numba']:8.1f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
