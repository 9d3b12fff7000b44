"""Compare the compiled and pure-Python max-flow kernels on identical solves.

Both kernels receive byte-identical graphs: the minimizer instances come from
volume-constrained solves on random trigonometric media, seeded so reruns
reproduce the numbers.  Reported times are best-of-three wall clock, and the
resulting masks must agree bit for bit before a row is printed.

Run from the repository root:

    python3 benchmarks/bench_maxflow.py [--sides 64 128 192] [--repeats 3]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from curvemin.forcing import TrigMode, TrigPoly, build_field
from curvemin.graphcut import clear_structure_cache
from curvemin.grid import unit_torus
from curvemin.maxflow import backend_name
from curvemin.solver import minimize_volume_constrained
from curvemin.stencil import make_stencil


def _forcing(side: int, seed: int):
    rng = np.random.Generator(np.random.Philox(seed))
    modes = []
    for _ in range(4):
        k = (int(rng.integers(1, 4)), int(rng.integers(-3, 4)))
        modes.append(TrigMode(k=k, amplitude=float(rng.uniform(-0.4, 0.4))))
    return build_field(TrigPoly(modes=tuple(modes)), unit_torus(side))


def _time_solve(g, stencil, backend: str, repeats: int) -> tuple[float, object]:
    best = float("inf")
    result = None
    for _ in range(repeats):
        clear_structure_cache()
        t0 = time.perf_counter()
        result = minimize_volume_constrained(g, 0.1, stencil, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best, result


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sides", type=int, nargs="+", default=[48, 96, 144])
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--seed", type=int, default=2024)
    args = parser.parse_args()

    stencil = make_stencil("d2_16")
    print(f"default backend: {backend_name()}")
    print(f"{'side':>6} {'cells':>8} {'pure [s]':>10} {'compiled [s]':>13} {'speedup':>8}")
    for side in args.sides:
        g = _forcing(side, args.seed + side)
        t_pure, r_pure = _time_solve(g, stencil, "pure", args.repeats)
        t_comp, r_comp = _time_solve(g, stencil, "compiled", args.repeats)
        if not np.array_equal(r_pure.mask.cells, r_comp.mask.cells):
            raise AssertionError(f"backends disagree at side {side}")
        if r_pure.energy != r_comp.energy:
            raise AssertionError(f"energies differ at side {side}")
        print(
            f"{side:>6} {side * side:>8} {t_pure:>10.3f} {t_comp:>13.3f}"
            f" {t_pure / t_comp:>7.1f}x"
        )


if __name__ == "__main__":
    main()
