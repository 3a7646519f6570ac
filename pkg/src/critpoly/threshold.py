"""Threshold solver: find v with equal leading eigenvalues in both sectors.

``f(v) = Lambda_open(v) - Lambda_closed(v)`` is driven to zero with the
second-order Householder update, derivatives taken by central differences
at offsets of ``epsilon`` around the current point.
"""

from __future__ import annotations

import datetime as _dt
import json
import logging
import os
import threading
from dataclasses import asdict, dataclass, field

import mpmath

from . import extrapolate as ex
from .connectivity import SectorTag
from .lattice import LatticeSpec, get_lattice, instantiate
from .transfer import BondWeight, Precision, leading_eigenvalue, state_space

__all__ = [
    "BracketError",
    "DegenerateStepError",
    "NonConvergenceError",
    "ResultLedger",
    "SolverConfig",
    "ThresholdRecord",
    "find_threshold",
    "householder_step",
    "householder_update",
    "initial_guess",
    "sector_gap",
]

log = logging.getLogger(__name__)

SCAN = [mpmath.mpf(k) / 10 for k in range(1, 10)]


class DegenerateStepError(ArithmeticError):
    """The Householder denominator vanished."""


class BracketError(RuntimeError):
    """No sign change of the sector gap on the coarse p grid."""


class NonConvergenceError(RuntimeError):
    def __init__(self, msg, trace):
        super().__init__(msg)
        self.trace = trace


@dataclass(frozen=True)
class SolverConfig:
    prec: Precision = field(default_factory=Precision)
    epsilon: mpmath.mpf | None = None
    max_householder: int = 8
    guess: BondWeight | None = None
    power_tol: mpmath.mpf | None = None
    workers: int | None = None
    backend: str | None = None

    def __post_init__(self):
        with self.prec.context():
            eps = mpmath.sqrt(self.prec.delta) if self.epsilon is None else mpmath.mpf(self.epsilon)
            # eigenvalues must be resolved well below delta for |f| < delta to be decidable
            tol = self.prec.delta / 10**4 if self.power_tol is None else mpmath.mpf(self.power_tol)
        if not eps > 0:
            raise ValueError("epsilon must be positive")
        if self.max_householder < 1:
            raise ValueError("max_householder must be at least 1")
        object.__setattr__(self, "epsilon", eps)
        object.__setattr__(self, "power_tol", tol)


@dataclass(frozen=True)
class ThresholdRecord:
    lattice: str
    n: int
    digits: int
    v_root: str
    p_root: str
    householder_steps: int
    power_iterations_total: int
    timestamp: str

    @property
    def v(self):
        return mpmath.mpf(self.v_root)

    @property
    def p(self):
        return mpmath.mpf(self.p_root)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "ThresholdRecord":
        d = json.loads(line)
        return cls(**{k: d[k] for k in cls.__dataclass_fields__})


class ResultLedger:
    """Append-only JSON-lines file of threshold records; in memory if ``path`` is None."""

    def __init__(self, path: str | os.PathLike | None = None):
        self.path = None if path is None else os.fspath(path)
        self._mem: list[ThresholdRecord] = []
        self._lock = threading.Lock()

    def append(self, rec: ThresholdRecord) -> None:
        with self._lock:
            if self.path is None:
                self._mem.append(rec)
                return
            d = os.path.dirname(self.path)
            if d:
                os.makedirs(d, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(rec.to_json() + "\n")

    def records(self) -> list[ThresholdRecord]:
        if self.path is None:
            return list(self._mem)
        if not os.path.exists(self.path):
            return []
        with open(self.path, encoding="utf-8") as fh:
            return [ThresholdRecord.from_json(line) for line in fh if line.strip()]

    def best(self, lattice: str) -> dict:
        """Most precise (then latest) record per width for one lattice."""
        out = {}
        for r in self.records():
            if r.lattice != lattice:
                continue
            if r.n not in out or r.digits >= out[r.n].digits:
                out[r.n] = r
        return dict(sorted(out.items()))


def _dec(x, digits):
    return mpmath.nstr(x, digits, min_fixed=-mpmath.inf, max_fixed=mpmath.inf, strip_zeros=False)


def householder_update(f_minus, f_center, f_plus, v, epsilon):
    """Second-order Householder step from three samples spaced ``epsilon`` apart."""
    eps = mpmath.mpf(epsilon)
    if not eps > 0:
        raise ValueError("epsilon must be positive")
    g0, g1, g2, v = mpmath.mpf(f_minus), mpmath.mpf(f_center), mpmath.mpf(f_plus), mpmath.mpf(v)
    d1 = (g2 - g0) / (2 * eps)
    d2 = (g2 - 2 * g1 + g0) / (eps * eps)
    den = 2 * d1 * d1 - g1 * d2
    scale = max(abs(2 * d1 * d1), abs(g1 * d2))
    if den == 0 or abs(den) <= scale * mpmath.ldexp(1, -mpmath.mp.prec + 8):
        raise DegenerateStepError("vanishing Householder denominator")
    return v - 2 * g1 * d1 / den


def householder_step(f_minus, f_center, f_plus, v, epsilon) -> BondWeight:
    """Like :func:`householder_update` but returns a bond weight; negative results are degenerate."""
    v = v.v if isinstance(v, BondWeight) else v
    out = householder_update(f_minus, f_center, f_plus, v, epsilon)
    if not out >= 0:
        raise DegenerateStepError(f"step left the physical range (v = {mpmath.nstr(out, 8)})")
    return BondWeight(out)


class _Gap:
    """Evaluates the sector gap with warm starts per (sector, offset)."""

    def __init__(self, program, cfg: SolverConfig):
        self.program = program
        self.cfg = cfg
        self.spaces = {s: state_space(program, s) for s in SectorTag}
        self.warm = {}
        self.iterations = 0

    def __call__(self, v, slot=0):
        vals = []
        for s in (SectorTag.OPEN, SectorTag.CLOSED):
            r = leading_eigenvalue(self.program, s, BondWeight(v), self.cfg.prec, self.warm.get((s, slot)),
                                   tol=self.cfg.power_tol, workers=self.cfg.workers,
                                   backend=self.cfg.backend, space=self.spaces[s])
            self.warm[(s, slot)] = r.vector
            self.iterations += r.iterations
            vals.append(r.eigenvalue)
        return vals[0] - vals[1]


def sector_gap(lattice, n: int, p, cfg: SolverConfig | None = None):
    """``Lambda_open - Lambda_closed`` at probability ``p`` (a single evaluation)."""
    cfg = cfg or SolverConfig()
    spec = lattice if isinstance(lattice, LatticeSpec) else get_lattice(lattice)
    with cfg.prec.context():
        return _Gap(instantiate(spec, n), cfg)(BondWeight.from_p(p).v)


def _v_of_p(p):
    return p / (1 - p)


def find_threshold(lattice, n: int, cfg: SolverConfig | None = None,
                   ledger: ResultLedger | None = None) -> ThresholdRecord:
    """Root of the sector gap for ``lattice`` on a cylinder of width ``n``.

    The start comes from ``cfg.guess`` or :func:`initial_guess`.  Steps that
    are degenerate, leave the known bracket, or fail to shrink ``|f|`` are
    replaced by bisection in p; if no bracket is known yet, a coarse scan of
    p = 0.1, ..., 0.9 provides one.
    """
    cfg = cfg or SolverConfig()
    spec = lattice if isinstance(lattice, LatticeSpec) else get_lattice(lattice)
    ledger = ledger if ledger is not None else ResultLedger()
    program = instantiate(spec, n)
    prec = cfg.prec
    with prec.context():
        delta, eps = prec.delta, cfg.epsilon
        gap = _Gap(program, cfg)
        v = cfg.guess.v if cfg.guess is not None else initial_guess(ledger, spec.name, n).v
        if mpmath.isinf(v) or v <= 0:
            v = mpmath.mpf(1)
        lo = hi = None  # p values with f < 0 and f > 0
        trace = []
        steps = bisections = 0
        last_dv = None
        prev_abs = None
        while True:
            g1 = gap(v, 0)
            p = v / (1 + v)
            trace.append((v, g1))
            if g1 < 0:
                lo = p if lo is None else max(lo, p)
            elif g1 > 0:
                hi = p if hi is None else min(hi, p)
            if abs(g1) < delta or (last_dv is not None and last_dv < delta):
                break
            if steps >= cfg.max_householder:
                raise NonConvergenceError(
                    f"{spec.name} n={n}: no convergence after {steps} Householder steps "
                    f"(|f| = {mpmath.nstr(abs(g1), 3)})", trace)
            if bisections > 4 * prec.bits:
                raise NonConvergenceError(f"{spec.name} n={n}: bisection did not terminate", trace)
            new = None
            # near the root |f| collapses; a step that did not cut it by 4x is not trusted
            if prev_abs is None or abs(g1) < prev_abs / 4:
                try:
                    g0 = gap(v - eps, -1) if v > eps else None
                    g2 = gap(v + eps, 1)
                    if g0 is not None:
                        new = householder_update(g0, g1, g2, v, eps)
                        steps += 1
                except DegenerateStepError:
                    new = None
            if new is not None:
                pn = new / (1 + new) if new > -1 else None
                if not new > 0 or (lo is not None and pn < lo) or (hi is not None and pn > hi):
                    new = None
            if new is None:
                if lo is None or hi is None:
                    lo, hi = _scan(gap, spec.name, n)
                new = _v_of_p((lo + hi) / 2)
                bisections += 1
                prev_abs = None
            else:
                prev_abs = abs(g1)
            last_dv = abs(new - v)
            v = new
        p = v / (1 + v)
        rec = ThresholdRecord(
            lattice=spec.name, n=n, digits=prec.digits,
            v_root=_dec(v, prec.digits), p_root=_dec(p, prec.digits),
            householder_steps=steps, power_iterations_total=gap.iterations,
            timestamp=_dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        )
    log.info("%s n=%d: p = %s after %d steps", spec.name, n, rec.p_root[:20], steps)
    ledger.append(rec)
    return rec


def _scan(gap, name, n):
    prev = None
    for p in SCAN:
        g = gap(_v_of_p(p), 0)
        if g == 0:
            return p, p
        if prev is not None and (prev[1] < 0) != (g < 0):
            a, b = (prev[0], p) if prev[1] < 0 else (p, prev[0])
            return a, b
        prev = (p, g)
    raise BracketError(f"{name} n={n}: sector gap has no sign change on p = 0.1..0.9")


def initial_guess(ledger: ResultLedger, lattice: str, n: int) -> BondWeight:
    """Starting weight for width ``n`` from narrower results already in the ledger."""
    recs = {k: r for k, r in ledger.best(lattice).items() if k < n}
    if not recs:
        return BondWeight.from_p(mpmath.mpf("0.5"))
    widths = sorted(recs)
    last = recs[widths[-1]]
    if len(widths) < 3:
        return BondWeight(mpmath.mpf(last.v_root))
    a, b, c = widths[-3:]
    if not (b == a + 1 and c == b + 1):
        return BondWeight(mpmath.mpf(last.v_root))
    try:
        with mpmath.workdps(ex.WORK_DPS):
            s = ex.Series({k: mpmath.mpf(recs[k].p_root) for k in (a, b, c)}, "ledger")
            q = ex.ratio_series(s)[c]
            d = ex.solve_effective_exponent(q, c, seed=4)
            # two-point fit of p_c + A k^-d through the widest pair
            A = (s[c] - s[b]) / (mpmath.power(c, -d) - mpmath.power(b, -d))
            pc = s[c] - A * mpmath.power(c, -d)
            guess = pc + A * mpmath.power(n, -d)
        if 0 < guess < 1:
            return BondWeight.from_p(guess)
    except (ex.RangeError, ex.DegenerateSeriesError, ValueError, ZeroDivisionError) as exc:
        log.debug("extrapolated guess failed: %s", exc)
    return BondWeight(mpmath.mpf(last.v_root))
