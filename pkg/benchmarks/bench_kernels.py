"""Time the compiled kernels against the NumPy fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Each kernel runs on the shapes it sees during training (batch 32, kernel 9)
and in the t-SNE loop (n = 600). Results are checked for agreement before
they are timed.
"""
import argparse
import time

import numpy as np

from pqcluster import kernels


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def cases(rng):
    x = rng.normal(size=(32, 8, 2048))
    W = rng.normal(size=(16, 8, 9))
    b = rng.normal(size=16)
    dy = rng.normal(size=(32, 16, 2048))
    px = rng.normal(size=(32, 16, 4096))
    Y = rng.normal(size=(600, 2))
    P = rng.random((600, 600))
    np.fill_diagonal(P, 0)
    P = (P + P.T) / (P + P.T).sum()
    return {
        "conv1d_forward 32x8x2048 k9": lambda m: m.conv1d_forward(x, W, b),
        "conv1d_backward 32x8x2048 k9": lambda m: m.conv1d_backward(x, W, dy, True),
        "maxpool2_forward 32x16x4096": lambda m: m.maxpool2_forward(px),
        "tsne_gradient n=600": lambda m: m.tsne_gradient(Y, P, 1.0),
    }


def _flat(out):
    parts = out if isinstance(out, tuple) else (out,)
    return [np.asarray(o, dtype=np.float64).ravel() for o in parts if o is not None]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    mods = kernels.backends()
    if "compiled" not in mods:
        print("compiled backend not built; only the python fallback is available")
    rng = np.random.default_rng(0)
    print(f"{'kernel':32s} {'python ms':>10s} {'compiled ms':>12s} {'speedup':>8s}")
    for name, fn in cases(rng).items():
        ref = fn(mods["python"])
        t_py = best_of(lambda: fn(mods["python"]), args.repeat)
        row = f"{name:32s} {t_py * 1e3:10.2f}"
        if "compiled" in mods:
            got = fn(mods["compiled"])
            for a, c in zip(_flat(ref), _flat(got)):
                np.testing.assert_allclose(c, a, rtol=1e-9, atol=1e-9)
            t_c = best_of(lambda: fn(mods["compiled"]), args.repeat)
            row += f" {t_c * 1e3:12.2f} {t_py / t_c:7.1f}x"
        print(row)


if __name__ == "__main__":
    main()
