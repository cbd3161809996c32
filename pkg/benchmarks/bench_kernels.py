"""Time the compiled kernels against the NumPy fallback.

    python benchmarks/bench_kernels.py [--repeat 5] [--pixels 4096] [--bins 1024]

Each kernel is run on identical inputs through both backends; outputs are
compared before timing.  Without the compiled extension only the fallback
column is printed.
"""
import argparse
import timeit

import numpy as np

from prsdepth import _kernels_py, kernels

try:
    from prsdepth import _kernels as _ext
except ImportError:
    _ext = None


def cases(P, T, rng):
    h = rng.poisson(0.5, size=(P, T)).astype(np.float64)
    x = rng.normal(size=(P, T))
    tau = rng.uniform(0.1, 1.0, size=P)
    tmpl = np.log1p(np.exp(-0.5 * np.linspace(-3, 3, 15) ** 2) * 40.0)
    vol = rng.normal(size=(1, 16, 20, 18, 18))
    k, s, d = (3, 3, 3), (1, 1, 1), (1, 1, 1)
    out = (18, 16, 16)
    cols = rng.normal(size=(16 * 27, 18 * 16 * 16))
    return {
        "window_sum": lambda m: m.window_sum(h, 5),
        "soft_threshold": lambda m: m.soft_threshold(x, tau),
        "soft_threshold_grad": lambda m: m.soft_threshold_grad(x, tau, x),
        "first_argmax": lambda m: m.first_argmax(h),
        "matched_filter_argmax": lambda m: m.matched_filter_argmax(h, tmpl, -7),
        "im2col3d": lambda m: m.im2col3d(vol, k, s, d, out),
        "col2im3d": lambda m: m.col2im3d(cols, vol.shape, k, s, d, out),
    }


def _same(a, b):
    if isinstance(a, tuple):
        return all(_same(u, v) for u, v in zip(a, b))
    return np.allclose(a, b, rtol=1e-12, atol=1e-12)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--pixels", type=int, default=4096)
    ap.add_argument("--bins", type=int, default=1024)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"active backend: {kernels.BACKEND}")
    print(f"{'kernel':24s} {'numpy ms':>10s} {'cython ms':>10s} {'speedup':>8s}")
    for name, fn in cases(args.pixels, args.bins, rng).items():
        t_py = min(timeit.repeat(lambda: fn(_kernels_py), number=1, repeat=args.repeat)) * 1e3
        if _ext is None:
            print(f"{name:24s} {t_py:10.2f} {'-':>10s} {'-':>8s}")
            continue
        if not _same(fn(_kernels_py), fn(_ext)):
            raise SystemExit(f"{name}: backends disagree")
        t_ext = min(timeit.repeat(lambda: fn(_ext), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:24s} {t_py:10.2f} {t_ext:10.2f} {t_py / t_ext:7.1f}x")


if __name__ == "__main__":
    main()
