#!/usr/bin/env python3
"""Time the ball-reduction kernels and one operator sweep on both backends.

Usage:
    python benchmarks/bench_kernels.py [--n 257] [--radius 8] [--repeat 5]

The numba path is compiled before timing.  Outputs of both backends are
compared bit for bit.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from dpmvp import _kernels
from dpmvp.core import GridSpec, ScalarField
from dpmvp.elliptic import DoublePhase, mvp_apply


def _best(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def run(n: int, radius: float, repeat: int) -> list:
    rng = np.random.default_rng(0)
    u = rng.standard_normal((n, n))
    eps = radius / (n - 1) * 2
    grid = GridSpec.for_eps(2, [(-1, 1), (-1, 1)], eps, h=eps / radius, grad_a_max=1.0)
    field = ScalarField.from_expression("sin(3*x1)*exp(x2) + x1*x2", grid)
    kind = DoublePhase(2, 4, "0.5*(1 + x1^2)")

    cases = {
        "ball sum": lambda: _kernels.ball_reduce(u, radius, "sum"),
        "ball max": lambda: _kernels.ball_reduce(u, radius, "max"),
        "operator sweep": lambda: mvp_apply(field, kind, eps).values,
    }
    backends = ["numpy"] + (["numba"] if _kernels.HAS_NUMBA else [])
    rows = []
    for name, fn in cases.items():
        outs = {}
        times = {}
        for b in backends:
            _kernels.set_backend(b)
            outs[b] = fn()  # warm-up and compile
            times[b] = _best(fn, repeat)
        same = all(np.array_equal(outs[backends[0]], o, equal_nan=True) for o in outs.values())
        rows.append((name, times, same))
    return rows


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=257, help="lattice points per axis for the raw kernels")
    ap.add_argument("--radius", type=float, default=8.0, help="ball radius in lattice units")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    initial = _kernels.backend()
    try:
        rows = run(args.n, args.radius, args.repeat)
    finally:
        _kernels.set_backend(initial)
    print(f"{'case':<16}{'numpy ms':>10}{'numba ms':>10}{'speedup':>9}  identical")
    for name, times, same in rows:
        tn = times["numpy"] * 1e3
        tb = times.get("numba")
        nb = f"{tb * 1e3:10.2f}" if tb else f"{'n/a':>10}"
        sp = f"{times['numpy'] / tb:9.2f}" if tb else f"{'':>9}"
        print(f"{name:<16}{tn:10.2f}{nb}{sp}  {same}")


if __name__ == "__main__":
    main()
