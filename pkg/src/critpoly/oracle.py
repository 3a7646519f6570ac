"""Critical polynomials of small toroidal bases by exhaustive enumeration.

Every subset of the basis edges is classified by the topology of its open
clusters on the torus: ``two_d`` when one cluster winds in two independent
directions, ``zero_d`` when no cluster winds at all, ``other`` otherwise.
The polynomial is ``Z(two_d) - Z(zero_d)`` with exact integer coefficients.

Unit cells of the eleven Archimedean lattices are built from explicit
coordinates (unit bond length); bonds are the site pairs at distance one.
"""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass
from functools import lru_cache
from math import comb

import mpmath
import numpy as np

from .kernels import backend_name, default_workers

__all__ = [
    "CapacityError",
    "CriticalPolynomial",
    "NonCanonicalPolynomialError",
    "TorusBasis",
    "UnitCell",
    "classify",
    "critical_polynomial",
    "parse_basis_file",
    "root_in_unit_interval",
    "torus_basis",
    "unit_cell",
]

DEFAULT_EDGE_CAP = 24
TWO_D, ZERO_D, OTHER = "two_d", "zero_d", "other"


class CapacityError(RuntimeError):
    def __init__(self, edges: int, cap: int):
        super().__init__(f"basis has {edges} edges, enumeration cap is {cap}")
        self.edges = edges
        self.cap = cap


class NonCanonicalPolynomialError(ValueError):
    pass


# -- geometry ----------------------------------------------------------------

_R2, _R3 = math.sqrt(2), math.sqrt(3)


def _polar(r, deg, c=(0.0, 0.0)):
    t = math.radians(deg)
    return (c[0] + r * math.cos(t), c[1] + r * math.sin(t))


def _cells():
    h_cross = _R3 + 1
    h_312 = 1 + 2 / _R3
    r_312 = 1 / _R3
    snub = math.sqrt(2 + _R3)
    t1, t2 = np.array([1.0, 0.0]), np.array([0.5, _R3 / 2])
    return {
        "square": ((1, 0), (0, 1), [(0, 0)]),
        "triangular": ((1, 0), (0.5, _R3 / 2), [(0, 0)]),
        "hexagonal": ((_R3, 0), (_R3 / 2, 1.5), [(0, 0), (0, 1)]),
        "kagome": ((2, 0), (1, _R3), [(0, 0), (1, 0), (0.5, _R3 / 2)]),
        "four-eight": ((1 + _R2, 0), (0, 1 + _R2), [_polar(1 / _R2, 90 * k) for k in range(4)]),
        "frieze": ((1, 0), (0.5, 1 + _R3 / 2), [(0, 0), (0, 1)]),
        "three-twelve": (
            (_R3 * h_312, 0),
            (_R3 * h_312 / 2, 1.5 * h_312),
            [_polar(r_312, a) for a in (90, 210, 330)] + [_polar(r_312, a, (0, h_312)) for a in (270, 30, 150)],
        ),
        "cross": (
            (_R3 * h_cross, 0),
            (_R3 * h_cross / 2, 1.5 * h_cross),
            [_polar(1, 60 * k) for k in range(6)] + [_polar(1, 60 * k, (0, h_cross)) for k in range(6)],
        ),
        "snub-square": ((snub, 0), (0, snub), [_polar(1 / _R2, 60 + 90 * k) for k in range(4)]),
        # triangular lattice with an index-7 sublattice of sites removed
        "snub-hexagonal": (
            tuple(2 * t1 + t2),
            tuple(3 * t2 - t1),
            [tuple(v) for v in (t1, t2, t2 - t1, -t1, -t2, t1 - t2)],
        ),
        "ruby": ((1 + _R3, 0), ((1 + _R3) / 2, (1 + _R3) * _R3 / 2), [_polar(1, 30 + 60 * k) for k in range(6)]),
    }


@dataclass(frozen=True)
class UnitCell:
    name: str
    a1: tuple
    a2: tuple
    sites: tuple
    edges: tuple  # (u, v, dx, dy): site u in cell (0,0) to site v in cell (dx,dy)


@lru_cache(maxsize=None)
def unit_cell(name: str) -> UnitCell:
    cells = _cells()
    if name not in cells:
        raise KeyError(f"no unit cell for {name!r}")
    a1, a2, sites = cells[name]
    A1, A2 = np.array(a1, float), np.array(a2, float)
    S = [np.array(s, float) for s in sites]
    edges = []
    for i, j in itertools.product(range(len(S)), repeat=2):
        for m, n in itertools.product(range(-2, 3), repeat=2):
            if (i, j, m, n) > (j, i, -m, -n):
                continue
            d = S[j] + m * A1 + n * A2 - S[i]
            if abs(math.hypot(*d) - 1) < 1e-9:
                edges.append((i, j, m, n))
    return UnitCell(name, tuple(a1), tuple(a2), tuple(tuple(s) for s in sites), tuple(edges))


@dataclass(frozen=True)
class TorusBasis:
    vertices: tuple
    edges: tuple  # (u, v, (wx, wy)) with u, v indices into vertices
    provenance: str = ""

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def to_text(self) -> str:
        lines = [f"# {self.provenance}"] if self.provenance else []
        lines += [f"vertex {v}" for v in range(len(self.vertices))]
        lines += [f"edge {u} {v} {w[0]} {w[1]}" for u, v, w in self.edges]
        return "\n".join(lines) + "\n"

    def graph(self):
        import networkx as nx

        g = nx.MultiGraph()
        g.add_nodes_from(range(len(self.vertices)))
        for u, v, _ in self.edges:
            g.add_edge(u, v)
        return g


def torus_basis(name: str, lx: int = 1, ly: int = 1, shear: int = 0) -> TorusBasis:
    """Periodic basis of ``lx x ly`` unit cells, identified by the cell
    translations ``(lx, 0)`` and ``(shear, ly)``.
    """
    if lx < 1 or ly < 1:
        raise ValueError("cell counts must be positive")
    cell = unit_cell(name)
    ns = len(cell.sites)
    index = {}
    verts = []
    for y in range(ly):
        for x in range(lx):
            for s in range(ns):
                index[(s, x, y)] = len(verts)
                verts.append((s, x, y))
    edges = []
    for y in range(ly):
        for x in range(lx):
            for u, v, dx, dy in cell.edges:
                yy = y + dy
                k2 = yy // ly
                yy -= k2 * ly
                xx = x + dx - k2 * shear
                k1 = xx // lx
                xx -= k1 * lx
                edges.append((index[(u, x, y)], index[(v, xx, yy)], (k1, k2)))
    return TorusBasis(tuple(verts), tuple(edges), f"{name} {lx}x{ly}" + (f" shear {shear}" if shear else ""))


def parse_basis_file(text: str) -> TorusBasis:
    """``vertex <id>`` and ``edge <u> <v> <wx> <wy>`` lines; ``#`` comments."""
    ids: dict[str, int] = {}
    edges = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        if toks[0] == "vertex" and len(toks) == 2:
            if toks[1] in ids:
                raise ValueError(f"line {lineno}: duplicate vertex {toks[1]!r}")
            ids[toks[1]] = len(ids)
        elif toks[0] == "edge" and len(toks) == 5:
            u, v = toks[1], toks[2]
            if u not in ids or v not in ids:
                raise ValueError(f"line {lineno}: edge refers to an undeclared vertex")
            try:
                w = (int(toks[3]), int(toks[4]))
            except ValueError:
                raise ValueError(f"line {lineno}: winding components must be integers") from None
            edges.append((ids[u], ids[v], w))
        else:
            raise ValueError(f"line {lineno}: expected 'vertex <id>' or 'edge <u> <v> <wx> <wy>'")
    if not ids:
        raise ValueError("basis has no vertices")
    return TorusBasis(tuple(ids), tuple(edges), "file")


# -- classification ----------------------------------------------------------


def _classify_arrays(nv, eu, ev, ewx, ewy, mask):
    """Reference classifier on plain Python data; mirrors the compiled one."""
    parent = list(range(nv))
    px = [0] * nv
    py = [0] * nv
    rank = [0] * nv
    bx = [0] * nv
    by = [0] * nv

    def find(a):
        x = y = 0
        r = a
        while parent[r] != r:
            x += px[r]
            y += py[r]
            r = parent[r]
        return r, x, y

    def add_winding(r, cx, cy):
        if cx == 0 and cy == 0 or rank[r] == 2:
            return
        if rank[r] == 0:
            rank[r], bx[r], by[r] = 1, cx, cy
        elif bx[r] * cy - by[r] * cx != 0:
            rank[r] = 2

    for e in range(len(eu)):
        if not mask >> e & 1:
            continue
        ru, xu, yu = find(eu[e])
        rv, xv, yv = find(ev[e])
        # potential of v relative to u along this edge
        if ru == rv:
            add_winding(ru, xu + ewx[e] - xv, yu + ewy[e] - yv)
            continue
        # hang rv below ru: pot(rv) relative to ru
        parent[rv] = ru
        px[rv] = xu + ewx[e] - xv
        py[rv] = yu + ewy[e] - yv
        if rank[rv]:
            add_winding(ru, bx[rv], by[rv])
            if rank[rv] == 2:
                rank[ru] = 2
    best = max((rank[r] for r in range(nv) if parent[r] == r), default=0)
    return 2 if best == 2 else (0 if all(rank[r] == 0 for r in range(nv) if parent[r] == r) else 1)


def _arrays(basis: TorusBasis):
    eu = np.array([e[0] for e in basis.edges], dtype=np.int64)
    ev = np.array([e[1] for e in basis.edges], dtype=np.int64)
    ewx = np.array([e[2][0] for e in basis.edges], dtype=np.int64)
    ewy = np.array([e[2][1] for e in basis.edges], dtype=np.int64)
    return eu, ev, ewx, ewy


def classify(basis: TorusBasis, open_edges) -> str:
    """Topological class of the open subgraph given by edge indices ``open_edges``."""
    mask = 0
    for e in open_edges:
        if not 0 <= e < basis.n_edges:
            raise IndexError(f"edge index {e} out of range")
        mask |= 1 << e
    eu, ev, ewx, ewy = (a.tolist() for a in _arrays(basis))
    code = _classify_arrays(len(basis.vertices), eu, ev, ewx, ewy, mask)
    return {2: TWO_D, 0: ZERO_D, 1: OTHER}[code]


# -- polynomial ----------------------------------------------------------------


@dataclass(frozen=True)
class CriticalPolynomial:
    """Integer coefficients, lowest degree first."""

    coefficients: tuple

    @property
    def degree(self) -> int:
        nz = [k for k, c in enumerate(self.coefficients) if c]
        return nz[-1] if nz else 0

    def __call__(self, p):
        acc = mpmath.mpf(0)
        for c in reversed(self.coefficients):
            acc = acc * p + c
        return acc

    def eval_fraction(self, p):
        acc = 0
        for c in reversed(self.coefficients):
            acc = acc * p + c
        return acc

    def __str__(self) -> str:
        terms = []
        for k, c in enumerate(self.coefficients):
            if c:
                terms.append(f"{c:+d}" + ("" if k == 0 else "*p" if k == 1 else f"*p^{k}"))
        return " ".join(terms) or "0"


def _expand(per_size: list[int], E: int) -> list[int]:
    """Coefficients of sum_k a_k p^k (1-p)^(E-k)."""
    out = [0] * (E + 1)
    for k, a in enumerate(per_size):
        if not a:
            continue
        for j in range(E - k + 1):
            out[k + j] += a * comb(E - k, j) * (-1) ** j
    return out


def class_counts(basis: TorusBasis, *, workers: int | None = None, backend: str | None = None,
                 cap: int = DEFAULT_EDGE_CAP) -> np.ndarray:
    """Subset counts by size: rows zero_d, other, two_d; columns |S|."""
    E = basis.n_edges
    if E > cap:
        raise CapacityError(E, cap)
    nv = len(basis.vertices)
    eu, ev, ewx, ewy = _arrays(basis)
    backend = backend or backend_name()
    workers = default_workers() if workers is None else workers
    total = 1 << E
    bounds = np.linspace(0, total, max(1, workers) + 1).astype(np.int64)
    if backend == "numba":
        from ._kernels_numba import enumerate_classes

        return enumerate_classes(nv, eu, ev, ewx, ewy, bounds)
    counts = np.zeros((3, E + 1), dtype=np.int64)
    lists = [a.tolist() for a in (eu, ev, ewx, ewy)]
    for mask in range(total):
        counts[_classify_arrays(nv, *lists, mask), mask.bit_count()] += 1
    return counts


def critical_polynomial(basis: TorusBasis, *, cap: int = DEFAULT_EDGE_CAP, workers: int | None = None,
                        backend: str | None = None) -> CriticalPolynomial:
    counts = class_counts(basis, workers=workers, backend=backend, cap=cap)
    E = basis.n_edges
    diff = [int(counts[2, k]) - int(counts[0, k]) for k in range(E + 1)]
    coeffs = _expand(diff, E)
    while len(coeffs) > 1 and coeffs[-1] == 0:
        coeffs.pop()
    return CriticalPolynomial(tuple(coeffs))


def root_in_unit_interval(poly: CriticalPolynomial, digits: int = 50):
    """The unique root of ``poly`` in (0, 1) to ``digits`` decimal places."""
    from fractions import Fraction

    grid = [Fraction(0)] + [Fraction(k, 1024) for k in range(1, 1024)] + [Fraction(1)]
    signed = [(x, v) for x, v in ((x, poly.eval_fraction(x)) for x in grid) if v != 0]
    # a grid point where poly vanishes only counts if the sign flips across it
    changes = [(a, b) for (a, va), (b, vb) in zip(signed, signed[1:]) if (va < 0) != (vb < 0)]
    if len(changes) != 1:
        raise NonCanonicalPolynomialError(f"expected one sign change in (0,1), found {len(changes)}")
    lo, hi = changes[0]
    exact = [x for x in grid if lo < x < hi]
    if exact:
        lo = hi = exact[0]
    with mpmath.workdps(digits + 20):
        if lo == hi:
            return mpmath.mpf(lo.numerator) / lo.denominator
        a = mpmath.mpf(lo.numerator) / lo.denominator
        b = mpmath.mpf(hi.numerator) / hi.denominator
        fa = poly(a)
        for _ in range(40):
            m = (a + b) / 2
            fm = poly(m)
            if (fm < 0) == (fa < 0):
                a, fa = m, fm
            else:
                b = m
        root = mpmath.findroot(poly, (a, b), solver="anderson", tol=mpmath.mpf(10) ** (-digits - 10))
        if not a - (b - a) <= root <= b + (b - a):
            root = mpmath.findroot(poly, (a, b), solver="bisect", tol=mpmath.mpf(10) ** (-digits - 10))
        return root


_BASIS_SPEC = re.compile(r"^(\d+)x(\d+)$")


def parse_cells(text: str) -> tuple[int, int]:
    m = _BASIS_SPEC.match(text.strip())
    if not m:
        raise ValueError(f"cell counts must look like 2x3, got {text!r}")
    return int(m.group(1)), int(m.group(2))
