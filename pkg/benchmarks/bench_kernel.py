"""Compare the compiled and numpy cell-propagation kernels.

Usage: ``python benchmarks/bench_kernel.py [--cells N] [--zs K] [--repeat R]``
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from warpdn import kernel
from warpdn.profiles import polynomial_profile, power_profile, constant_profile
from warpdn.sl_core import SturmLiouvilleProblem


def _problem():
    p = power_profile(1.0, 0.0, 0.5)
    r = polynomial_profile([1.0, 1.0, 1.0])
    return SturmLiouvilleProblem(p, constant_profile(0.0), r, name="bench")


def _time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--level", type=int, default=4, help="mesh refinement level")
    ap.add_argument("--zs", type=int, default=64, help="number of spectral parameters")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    mesh = _problem().mesh(args.level)
    zs = -np.logspace(0, 4, args.zs) + 0j
    y0 = np.array([0.0, 1.0], complex)
    print(f"cells={mesh.ncells} zs={args.zs}")
    results = {}
    for name, mod in kernel.backends().items():
        t_tr = _time(lambda: mod.transfer(*mesh.moments, zs), args.repeat)
        t_pr = _time(lambda: [mod.propagate(*mesh.moments, z, y0, False) for z in zs[:8]], args.repeat)
        results[name] = mod.transfer(*mesh.moments, zs)
        print(f"{name:>7}: transfer {t_tr * 1e3:9.2f} ms   propagate x8 {t_pr * 1e3:9.2f} ms")
    if len(results) == 2:
        Ta, La, _ = results["cython"]
        Tb, Lb, _ = results["python"]
        rel = np.max(np.abs(Ta * np.exp((La - Lb))[:, None, None] - Tb) / np.abs(Tb).max(axis=(1, 2))[:, None, None])
        print(f"max relative difference between backends: {rel:.2e}")


if __name__ == "__main__":
    main()
