#!/usr/bin/env python3
"""Benchmark the numba-jitted kernels against their pure-numpy fallbacks.

The numpy path is what runs when SHARDMATCH_NO_NUMBA=1 (or numba is
missing); this script times both implementations directly so no environment
juggling is needed.

Usage: python benchmarks/bench_kernels.py [--repeats N]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from shardmatch import kernels


def _time(fn, *args, repeats: int = 50) -> float:
    fn(*args)  # warm-up / JIT
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn(*args)
    return (time.perf_counter() - t0) / repeats


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=50)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    rows = []

    a = rng.random((250, 2)) * 120
    b = rng.random((250, 2)) * 120
    rows.append(("nn_distances 250x250", kernels.nn_distances_numpy, kernels.nn_distances_numba, (a, b)))

    h = rng.random((128, 128))
    dom = np.ones((128, 128), dtype=bool)
    rows.append(("local_extrema 128^2 r5", kernels.local_extrema_numpy, kernels.local_extrema_numba, (h, dom, 5)))

    ang = rng.uniform(-np.pi, np.pi, (128, 128))
    mag = rng.random((128, 128))
    msin = mag * np.sin(ang)
    mcos = mag * np.cos(ang)
    rows.append(
        (
            "orientation_bins w8",
            kernels.orientation_bins_numpy,
            kernels.orientation_bins_numba,
            (ang, mag, msin, mcos, dom, 64, 64, 8, 16),
        )
    )

    poly = np.column_stack([np.linspace(10, 110, 40), 60 + 8 * np.sin(np.linspace(0, 6, 40))])
    d = np.linalg.norm(np.diff(poly, axis=0), axis=1)
    segs = np.column_stack([poly[:-1], poly[1:], np.concatenate([[0.0], np.cumsum(d)[:-1]])])
    pts = rng.random((128 * 128, 2)) * 128
    rows.append(("polyline_field 39seg x 16k", kernels.polyline_field_numpy, kernels.polyline_field_numba, (segs, pts)))

    img = rng.random((160, 160))
    inv = np.array([[0.9659, -0.2588, 20.0], [0.2588, 0.9659, -15.0]])
    rows.append(("warp_bilinear 160^2", kernels.warp_bilinear_numpy, kernels.warp_bilinear_numba, (img, inv, (160, 160))))

    print(f"active backend: {kernels.BACKEND}")
    print(f"{'kernel':28s} {'numpy':>10s} {'numba':>10s} {'speedup':>8s}")
    for name, np_fn, nb_fn, fargs in rows:
        t_np = _time(np_fn, *fargs, repeats=args.repeats)
        if nb_fn is None:
            print(f"{name:28s} {t_np * 1e3:9.3f}ms {'n/a':>10s} {'-':>8s}")
            continue
        t_nb = _time(nb_fn, *fargs, repeats=args.repeats)
        print(f"{name:28s} {t_np * 1e3:9.3f}ms {t_nb * 1e3:9.3f}ms {t_np / t_nb:7.1f}x")


if __name__ == "__main__":
    main()
