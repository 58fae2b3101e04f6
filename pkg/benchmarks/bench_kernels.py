"""Compare the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N] [--sizes 32 64 128]

Times one right-hand-side evaluation (transport plus reactions) on square 2D
grids with a four-species network, open boundaries and advection, and checks
that both backends return the same numbers while doing so.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from entrodiff import BoundaryData, Grid, SolverConfig, TransportSpec, parse_network
from entrodiff._kernels import _fallback, available_backends
from entrodiff.solver import Operator

NETWORK = "species: E S C P\nreaction: E + S <-> C ; kf=4 kb=1\nreaction: C <-> E + P ; kf=2 kb=0.5\n"


def problem(n: int):
    g = Grid([n, n], faces={"xmin": "inflow", "xmax": "outflow"})
    net = parse_network(NETWORK)
    tr = TransportSpec.uniform(g, [0.1, 0.2, 0.3, 0.4], [[0.3, -0.2]] * 4)
    cfg = SolverConfig(net, tr, BoundaryData.uniform(g, {"xmin": [0.1, 0.2, 0.0, 0.3]}))
    u = np.random.default_rng(0).uniform(0.1, 2.0, (4, n, n))
    return g, cfg, u


def bench(n: int, repeat: int) -> dict[str, float]:
    g, cfg, u = problem(n)
    ref = Operator(g, cfg, backend=_fallback).rhs(u)
    best = {}
    for name, be in available_backends().items():
        op = Operator(g, cfg, backend=be)
        np.testing.assert_allclose(op.rhs(u), ref, rtol=1e-13, atol=1e-14)
        loops = max(1, 20_000 // (n * n))
        best[name] = min(timeit.repeat(lambda: op.rhs(u), number=loops, repeat=repeat)) / loops
    return best


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--sizes", type=int, nargs="+", default=[16, 32, 64, 128])
    args = ap.parse_args(argv)
    names = list(available_backends())
    print(f"{'grid':>9} " + " ".join(f"{n + ' [us]':>15}" for n in names) + ("      speedup" if len(names) > 1 else ""))
    for n in args.sizes:
        t = bench(n, args.repeat)
        row = f"{n:>4}x{n:<4} " + " ".join(f"{t[k] * 1e6:15.1f}" for k in names)
        if "compiled" in t:
            row += f"  {t['numpy'] / t['compiled']:10.2f}x"
        print(row)
    if len(names) == 1:
        print("compiled extension not built; only the numpy fallback was timed")


if __name__ == "__main__":
    main()
