"""Row transfer operators and arbitrary-precision power iteration.

Weight vectors hold fixed-point numbers (see :mod:`critpoly.fixedpoint`)
sized from the requested decimal precision.  A bond step splits each weight
``w`` into ``open = floor(w * p)`` and ``closed = w - open``, so every step
conserves weight exactly and the result is the same for any partition of the
work between threads.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from functools import lru_cache

import mpmath
import numpy as np

from . import fixedpoint as fx
from .connectivity import DEFAULT_STATE_CAP, SectorTag, StateSpace, close_state_space
from .kernels import default_workers, get_backend

__all__ = [
    "BondWeight",
    "ContractError",
    "DivergenceError",
    "EigenResult",
    "Precision",
    "WeightVector",
    "apply_row",
    "assemble_dense",
    "leading_eigenvalue",
    "state_space",
]

_MODES = {"p": 0, "open": 1, "closed": 2}


class ContractError(ValueError):
    """A vector was applied to an operator it was not built for."""


class DivergenceError(RuntimeError):
    def __init__(self, iterations, previous, last):
        super().__init__(f"power iteration did not converge in {iterations} steps (last estimates {previous}, {last})")
        self.iterations = iterations
        self.previous = previous
        self.last = last


@dataclass(frozen=True)
class Precision:
    digits: int = 60
    delta: mpmath.mpf = mpmath.mpf("1e-40")

    def __post_init__(self):
        object.__setattr__(self, "delta", mpmath.mpf(self.delta))
        if self.digits < 1:
            raise ValueError("digits must be positive")
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        # need enough headroom below delta for eigenvalue differences at
        # offsets of sqrt(delta) to be meaningful
        tol_digits = -float(mpmath.log10(self.delta))
        if self.digits < tol_digits + 10:
            raise ValueError(f"digits={self.digits} too small for delta={mpmath.nstr(self.delta, 3)}; need at least {math.ceil(tol_digits + 10)}")

    @property
    def nlimbs(self) -> int:
        return fx.limbs_for_digits(self.digits)

    @property
    def bits(self) -> int:
        return fx.frac_bits(self.nlimbs) + 64

    def context(self):
        return mpmath.workprec(self.bits)


@dataclass(frozen=True)
class BondWeight:
    """Fortuin-Kasteleyn weight ``v = p / (1 - p)``; ``v = inf`` stands for p = 1."""

    v: mpmath.mpf

    def __post_init__(self):
        v = mpmath.mpf(self.v)
        if not v >= 0:
            raise ValueError(f"bond weight must be nonnegative, got {v}")
        object.__setattr__(self, "v", v)

    @classmethod
    def from_p(cls, p) -> "BondWeight":
        p = mpmath.mpf(p)
        if not 0 <= p <= 1:
            raise ValueError(f"p must lie in [0, 1], got {p}")
        return cls(mpmath.inf if p == 1 else p / (1 - p))

    @property
    def p(self) -> mpmath.mpf:
        if mpmath.isinf(self.v):
            return mpmath.mpf(1)
        return self.v / (1 + self.v)

    def fixed(self, nlimbs: int) -> np.ndarray:
        if mpmath.isinf(self.v):
            return fx.from_int(1 << fx.frac_bits(nlimbs), nlimbs)
        with mpmath.workprec(fx.frac_bits(nlimbs) + 64):
            return fx.from_mpf(self.v / (1 + self.v), nlimbs)


@dataclass(eq=False)
class WeightVector:
    """Weights over a state space, as a ``(len(space), nlimbs)`` limb array."""

    space: StateSpace
    limbs: np.ndarray

    def __post_init__(self):
        if self.limbs.ndim != 2 or self.limbs.shape[0] != len(self.space):
            raise ContractError(f"vector of shape {self.limbs.shape} does not fit a space of {len(self.space)} states")

    @classmethod
    def unit(cls, space: StateSpace, index: int, nlimbs: int) -> "WeightVector":
        limbs = np.zeros((len(space), nlimbs), dtype=np.uint64)
        limbs[index, 0] = 1
        return cls(space, limbs)

    @classmethod
    def from_values(cls, space: StateSpace, values, nlimbs: int) -> "WeightVector":
        with mpmath.workprec(fx.frac_bits(nlimbs) + 64):
            rows = [fx.from_mpf(mpmath.mpf(x.item() if isinstance(x, np.generic) else x), nlimbs) for x in values]
        return cls(space, np.array(rows, dtype=np.uint64).reshape(len(space), nlimbs))

    @property
    def nlimbs(self) -> int:
        return self.limbs.shape[1]

    @property
    def entries(self) -> list:
        with mpmath.workprec(fx.frac_bits(self.nlimbs) + 64):
            return [fx.to_mpf(row) for row in self.limbs]

    def total(self):
        """Exact sum of all entries."""
        acc = self.limbs.sum(axis=0, dtype=np.uint64)
        with mpmath.workprec(fx.frac_bits(self.nlimbs) + 64):
            return fx.to_mpf(fx.normalize(acc))

    def resized(self, nlimbs: int) -> "WeightVector":
        if nlimbs == self.nlimbs:
            return self
        out = np.zeros((len(self.space), nlimbs), dtype=np.uint64)
        k = min(nlimbs, self.nlimbs)
        out[:, :k] = self.limbs[:, :k]
        return WeightVector(self.space, out)

    def sup_index(self) -> int:
        """Index of the largest entry (exact comparison among near-ties)."""
        a = fx.approx(self.limbs)
        top = float(a.max())
        if top == 0.0:
            return -1
        cand = np.flatnonzero(a >= top * (1 - 1e-9))
        if len(cand) == 1:
            return int(cand[0])
        return int(max(cand, key=lambda i: (fx.to_int(self.limbs[i]), -i)))

    def normalized(self) -> "WeightVector":
        """Scaled by a power of two so the largest entry lies in [1/2, 1)."""
        i = self.sup_index()
        if i < 0:
            return self
        _, e = math.frexp(float(fx.approx(self.limbs[i:i + 1])[0]))
        return WeightVector(self.space, fx.shift(self.limbs, -e))


@dataclass
class EigenResult:
    eigenvalue: mpmath.mpf
    vector: WeightVector
    iterations: int

    @property
    def lam(self):
        return self.eigenvalue


@lru_cache(maxsize=16)
def _cached_space(program, sector: SectorTag, cap: int) -> StateSpace:
    return close_state_space(program.width, sector, program, cap)


def state_space(program, sector, cap: int | None = None) -> StateSpace:
    """Closed state space of ``program`` in ``sector`` (memoized)."""
    if cap is None:
        cap = int(os.environ.get("CRITPOLY_STATE_CAP", DEFAULT_STATE_CAP))
    return _cached_space(program, SectorTag(sector), cap)


def _check(vec: WeightVector, program, sector) -> None:
    space = vec.space
    if space.sector is not SectorTag(sector):
        raise ContractError(f"vector lives in the {space.sector.value} sector, not {SectorTag(sector).value}")
    if space.width != program.width or space.steps != tuple(program.steps):
        raise ContractError("vector was built for a different row program")


def apply_row(vec: WeightVector, program, sector, w: BondWeight, *, workers: int | None = None,
              backend: str | None = None, track_sink: bool = False):
    """Image of ``vec`` under one row of ``program``.

    With ``track_sink`` the total weight that left the sector during the row
    is returned as well, as ``(vector, sink)``.
    """
    _check(vec, program, sector)
    kern = get_backend(backend)
    workers = default_workers() if workers is None else workers
    L = vec.nlimbs
    P = w.fixed(L)
    x = vec.limbs
    sink = np.zeros(L, dtype=np.uint64)
    for t in vec.space.tables:
        x, s = kern.row_step(x, t.dst_open, t.dst_closed, _MODES[t.wclass], P, t.n_out, workers)
        sink += s
    out = WeightVector(vec.space, x)
    if not track_sink:
        return out
    with mpmath.workprec(fx.frac_bits(L) + 64):
        return out, fx.to_mpf(fx.normalize(sink))


def _ratio(new: WeightVector, old: WeightVector, ref: int):
    a, b = new.limbs[ref], old.limbs[ref]
    if a.any() and b.any():
        return fx.to_mpf(a) / fx.to_mpf(b)
    i, j = new.sup_index(), old.sup_index()
    if i < 0:
        return mpmath.mpf(0)
    return fx.to_mpf(new.limbs[i]) / fx.to_mpf(old.limbs[j])


def leading_eigenvalue(program, sector, w: BondWeight, prec: Precision | None = None,
                       init: WeightVector | None = None, *, tol=None, max_iter: int = 10**4,
                       workers: int | None = None, backend: str | None = None,
                       space: StateSpace | None = None) -> EigenResult:
    """Power iteration for the largest eigenvalue of the row operator.

    Starts from ``init`` (re-sized to the working precision) or from the
    sector's start state.  The estimate is the ratio of successive iterates
    at the start state's component, falling back to the ratio of sup-norms
    when that component vanishes.  Stops when the relative change of the
    estimate drops below ``tol`` (default ``prec.delta``).
    """
    prec = prec or Precision()
    sector = SectorTag(sector)
    space = space or state_space(program, sector)
    tol = prec.delta if tol is None else mpmath.mpf(tol)
    L = prec.nlimbs
    ref = space.start_id
    if init is not None:
        if init.space is not space and (init.space.steps != space.steps or init.space.sector is not sector):
            raise ContractError("initial vector belongs to a different operator")
        u = WeightVector(space, init.resized(L).limbs)
    else:
        u = WeightVector.unit(space, ref, L)
    with prec.context():
        u = u.normalized()
        if u.sup_index() < 0:
            u = WeightVector.unit(space, ref, L)
        prev = None
        for it in range(1, max_iter + 1):
            t = apply_row(u, program, sector, w, workers=workers, backend=backend)
            lam = _ratio(t, u, ref)
            if lam == 0:
                return EigenResult(mpmath.mpf(0), t, it)
            u = t.normalized()
            if prev is not None and abs(lam - prev) <= tol * abs(lam):
                return EigenResult(lam, u, it)
            prev = lam
    raise DivergenceError(max_iter, prev, lam)


def assemble_dense(space: StateSpace, p: float) -> np.ndarray:
    """Row operator as a dense float matrix (column = source state); small widths only."""
    N = len(space)
    M = np.eye(N)
    for t in space.tables:
        step = np.zeros((t.n_out, t.n_in))
        wo = {"p": p, "open": 1.0, "closed": 0.0}[t.wclass]
        for s in range(t.n_in):
            for dst, wt in ((t.dst_open[s], wo), (t.dst_closed[s], 1.0 - wo)):
                if dst >= 0 and wt:
                    step[dst, s] += wt
        M = step @ M
    return M


