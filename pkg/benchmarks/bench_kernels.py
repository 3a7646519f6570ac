"""Row-step and enumeration kernels: numba vs the pure-numpy fallback.

Run: python3 benchmarks/bench_kernels.py [--width 8] [--digits 60] [--repeat 5]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from critpoly import fixedpoint as fx
from critpoly.kernels import get_backend
from critpoly.lattice import get_lattice, instantiate
from critpoly.oracle import class_counts, torus_basis
from critpoly.transfer import BondWeight, Precision, state_space


def _row(backend, space, x, P, workers):
    kern = get_backend(backend)
    for t in space.tables:
        x, _ = kern.row_step(x, t.dst_open, t.dst_closed, {"p": 0, "open": 1, "closed": 2}[t.wclass],
                             P, t.n_out, workers)
    return x


def bench_rows(lattice, width, digits, repeat, workers):
    prog = instantiate(get_lattice(lattice), width)
    space = state_space(prog, "open")
    L = Precision(digits).nlimbs
    rng = np.random.default_rng(0)
    x = rng.integers(0, fx.RADIX, size=(len(space), L), dtype=np.uint64)
    x[:, 0] = 0
    P = BondWeight.from_p(0.5244).fixed(L)
    out = {}
    for backend in ("numba", "numpy"):
        _row(backend, space, x, P, workers)  # compile / warm caches
        t0 = time.perf_counter()
        for _ in range(repeat):
            y = _row(backend, space, x, P, workers)
        out[backend] = ((time.perf_counter() - t0) / repeat, y)
    same = np.array_equal(out["numba"][1], out["numpy"][1])
    print(f"row operator  {lattice} n={width}: {len(space)} states, {L} limbs, {len(space.tables)} bond steps")
    for b in ("numba", "numpy"):
        print(f"  {b:<6} {out[b][0] * 1e3:9.2f} ms/row")
    print(f"  speedup {out['numpy'][0] / out['numba'][0]:.1f}x, identical output: {same}")


def bench_enumeration(lattice, cells, workers):
    basis = torus_basis(lattice, *cells)
    print(f"enumeration   {lattice} {cells[0]}x{cells[1]}: {basis.n_edges} edges, {1 << basis.n_edges} subsets")
    res = {}
    for backend in ("numba", "numpy"):
        class_counts(torus_basis(lattice), backend=backend, workers=workers)
        t0 = time.perf_counter()
        res[backend] = class_counts(basis, backend=backend, workers=workers)
        print(f"  {backend:<6} {time.perf_counter() - t0:9.3f} s")
    print(f"  identical counts: {np.array_equal(res['numba'], res['numpy'])}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--lattice", default="kagome")
    ap.add_argument("--width", type=int, default=6)
    ap.add_argument("--digits", type=int, default=60)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    bench_rows(args.lattice, args.width, args.digits, args.repeat, args.workers)
    bench_enumeration("kagome", (2, 1), args.workers)


if __name__ == "__main__":
    main()
