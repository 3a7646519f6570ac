"""Finite-size scaling analysis of threshold series.

A series maps cylinder widths to threshold estimates ``p(n)``, assumed to
follow ``p(n) = p_c + sum_k A_k n**(-D_k)``.  Everything runs in mpmath at
a working precision well above the 40-odd digits the inputs carry.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import warnings
from dataclasses import dataclass, field

import mpmath

__all__ = [
    "DegenerateSeriesError",
    "ExponentLimit",
    "FitError",
    "RangeError",
    "ScalingFit",
    "Series",
    "eliminate_leading",
    "exponent_preset",
    "extrapolate_pc",
    "effective_exponents",
    "fit_exponent_limit",
    "q_model",
    "ratio_series",
    "solve_effective_exponent",
]

log = logging.getLogger(__name__)

WORK_DPS = 80


class DegenerateSeriesError(ValueError):
    def __init__(self, n, what="zero denominator"):
        super().__init__(f"degenerate series at n={n}: {what}")
        self.n = n


class RangeError(ValueError):
    """No effective exponent in (0, 30] reproduces the given ratio."""


class FitError(ValueError):
    """Every requested fit variant was under-determined or singular."""


@dataclass(frozen=True)
class Series:
    points: dict
    provenance: str = "computed"
    thresholds: bool = True

    def __post_init__(self):
        with mpmath.workdps(WORK_DPS):
            pts = {int(n): mpmath.mpf(v) for n, v in self.points.items()}
        if not pts:
            raise ValueError("empty series")
        for n, v in pts.items():
            if n < 1:
                raise ValueError(f"width must be positive, got {n}")
            if self.thresholds and not 0 < v < 1:
                raise ValueError(f"threshold at n={n} outside (0, 1): {v}")
        object.__setattr__(self, "points", dict(sorted(pts.items())))

    @property
    def widths(self) -> list:
        return list(self.points)

    def __len__(self):
        return len(self.points)

    def __getitem__(self, n):
        return self.points[n]

    def tail(self, k: int) -> "Series":
        ws = self.widths[-k:]
        return Series({n: self.points[n] for n in ws}, self.provenance, self.thresholds)

    @classmethod
    def from_csv(cls, text: str, provenance: str = "computed") -> "Series":
        rows = list(csv.reader(io.StringIO(text)))
        rows = [r for r in rows if r and any(c.strip() for c in r)]
        if not rows or [c.strip() for c in rows[0]] != ["n", "p_c"]:
            raise ValueError("series CSV must start with the header 'n,p_c'")
        pts = {}
        for lineno, r in enumerate(rows[1:], start=2):
            if len(r) != 2:
                raise ValueError(f"line {lineno}: expected two columns")
            try:
                n = int(r[0])
                with mpmath.workdps(WORK_DPS):
                    v = mpmath.mpf(r[1].strip())
            except (ValueError, TypeError) as exc:
                raise ValueError(f"line {lineno}: {exc}") from None
            if n in pts:
                raise ValueError(f"line {lineno}: duplicate width {n}")
            if pts and n < max(pts):
                raise ValueError(f"line {lineno}: widths must be increasing")
            pts[n] = v
        return cls(pts, provenance)

    def to_csv(self, digits: int = 40) -> str:
        lines = ["n,p_c"]
        for n, v in self.points.items():
            lines.append(f"{n},{_dec(v, digits)}")
        return "\n".join(lines) + "\n"


def _dec(x, digits):
    return mpmath.nstr(x, digits, min_fixed=-mpmath.inf, max_fixed=mpmath.inf, strip_zeros=False)


def ratio_series(s: Series) -> Series:
    """``q(n) = (p(n) - p(n-1)) / (p(n-1) - p(n-2))`` wherever both predecessors exist."""
    out = {}
    with mpmath.workdps(WORK_DPS):
        for n in s.widths:
            if n - 1 in s.points and n - 2 in s.points:
                den = s[n - 1] - s[n - 2]
                if den == 0:
                    raise DegenerateSeriesError(n)
                out[n] = (s[n] - s[n - 1]) / den
    if not out:
        raise ValueError("need at least three consecutive widths")
    return Series(out, f"ratio of {s.provenance}", thresholds=False)


def q_model(delta, n):
    """Ratio ``q(n)`` of an exact single-term series ``c + A n**(-delta)``."""
    d = mpmath.mpf(delta)
    return (1 - mpmath.mpf(2) / n) ** d * (mpmath.power(n, d) - mpmath.power(n - 1, d)) / (
        mpmath.power(n - 1, d) - mpmath.power(n - 2, d))


def solve_effective_exponent(q, n: int, seed=6, *, digits: int = 30):
    """Effective exponent at width ``n`` from the ratio ``q``.

    The model ratio decreases monotonically in the exponent, so the root is
    bracketed on a grid, refined by bisection and polished by the secant
    method.  ``seed`` picks the branch when several grid brackets exist.
    """
    if n < 3:
        raise ValueError("effective exponents need n >= 3")
    with mpmath.workdps(max(WORK_DPS, digits + 20)):
        q = mpmath.mpf(q)
        if not q > 0:
            raise RangeError(f"ratio must be positive, got {q}")
        seed = mpmath.mpf(seed)

        def g(d):
            return q_model(d, n) - q

        grid = [mpmath.mpf(k) / 8 for k in range(1, 241)]
        vals = [g(d) for d in grid]
        brackets = [(grid[i], grid[i + 1]) for i in range(len(grid) - 1) if vals[i] == 0 or vals[i] * vals[i + 1] < 0]
        if vals[-1] == 0:
            return grid[-1]
        if not brackets:
            raise RangeError(f"no effective exponent in (0, 30] for q={mpmath.nstr(q, 8)} at n={n}")
        lo, hi = min(brackets, key=lambda b: abs((b[0] + b[1]) / 2 - seed))
        glo = g(lo)
        for _ in range(40):
            mid = (lo + hi) / 2
            gm = g(mid)
            if gm == 0:
                return mid
            if (gm < 0) == (glo < 0):
                lo, glo = mid, gm
            else:
                hi = mid
        root = mpmath.findroot(g, (lo, hi), solver="anderson", tol=mpmath.mpf(10) ** (-2 * digits))
        return +root


def effective_exponents(s: Series, seed=6) -> Series:
    """Effective leading exponent at every width where a ratio exists."""
    q = ratio_series(s)
    with mpmath.workdps(WORK_DPS):
        return Series({n: solve_effective_exponent(v, n, seed) for n, v in q.points.items()},
                      f"effective exponents of {s.provenance}", thresholds=False)


def eliminate_leading(s: Series, delta) -> Series:
    """Remove ``A n**(-delta)`` using each pair of adjacent widths."""
    out = {}
    with mpmath.workdps(WORK_DPS):
        d = mpmath.mpf(delta)
        if not d > 0:
            raise ValueError("delta must be positive")
        for n in s.widths:
            if n - 1 not in s.points:
                continue
            a, b = mpmath.power(n, -d), mpmath.power(n - 1, -d)
            if a == b:
                raise DegenerateSeriesError(n)
            out[n] = s[n] - a * (s[n] - s[n - 1]) / (a - b)
    if not out:
        raise ValueError("need at least two consecutive widths")
    return Series(out, f"{s.provenance} minus n^-{mpmath.nstr(d, 6)}", thresholds=s.thresholds)


def _lstsq(rows, rhs):
    """Least squares via Householder QR on column-scaled data; None if singular."""
    A = mpmath.matrix(rows)
    y = mpmath.matrix(rhs)
    scale = [max(abs(A[i, j]) for i in range(A.rows)) for j in range(A.cols)]
    if any(c == 0 for c in scale):
        return None
    for i in range(A.rows):
        for j in range(A.cols):
            A[i, j] /= scale[j]
    try:
        x, _ = mpmath.qr_solve(A, y)
    except (ZeroDivisionError, ValueError):
        return None
    out = [x[j] / scale[j] for j in range(A.cols)]
    if any(mpmath.isnan(t) or mpmath.isinf(t) for t in out):
        return None
    return out


@dataclass
class ExponentLimit:
    limit: mpmath.mpf
    error: mpmath.mpf
    variants: list = field(default_factory=list)

    def __iter__(self):
        yield self.limit
        yield self.error


def fit_exponent_limit(deltas: Series, orders=(3, 4, 5), windows=(6, 7, 8), central=None) -> ExponentLimit:
    """Extrapolate effective exponents to ``n -> inf`` with polynomials in ``1/n``.

    Every (order, window) pair is one variant; the limit is the intercept of
    ``central`` (default: highest order on the middle window, so the
    central fit has neighbours on both sides) and the error is the largest
    distance from it to any other intercept.
    """
    results = {}
    with mpmath.workdps(WORK_DPS):
        for k in orders:
            for w in windows:
                if w < k + 1 or w > len(deltas):
                    msg = f"fit order {k} on {w} points is under-determined or exceeds the data; skipped"
                    warnings.warn(msg, stacklevel=2)
                    continue
                t = deltas.tail(w)
                rows = [[mpmath.mpf(1) / n ** j for j in range(k + 1)] for n in t.widths]
                sol = _lstsq(rows, [t[n] for n in t.widths])
                if sol is not None:
                    results[(k, w)] = sol[0]
        if not results:
            raise FitError("no exponent fit variant was solvable")
        if central not in results:
            top = max(k for k, _ in results)
            ws = sorted(w for k, w in results if k == top)
            central = (top, ws[(len(ws) - 1) // 2])
        key = central
        mid = results[key]
        err = max(abs(v - mid) for v in results.values())
    table = [{"order": k, "window": w, "limit": v} for (k, w), v in sorted(results.items())]
    return ExponentLimit(mid, err, table)


@dataclass
class ScalingFit:
    exponents: list
    amplitudes: list
    pc_limit: mpmath.mpf
    error: mpmath.mpf
    variants_used: list
    central: tuple = None
    perturbation_shift: mpmath.mpf = None

    def report(self, digits: int = 25) -> dict:
        return {
            "exponents": [_dec(d, 12) for d in self.exponents],
            "amplitudes": [mpmath.nstr(a, digits) for a in self.amplitudes],
            "pc_limit": _dec(self.pc_limit, digits),
            "error": mpmath.nstr(self.error, 3),
            "central": {"terms": self.central[0], "window": self.central[1]},
            "perturbation_shift": None if self.perturbation_shift is None else mpmath.nstr(self.perturbation_shift, 3),
            "variants": [
                {"terms": v["terms"], "window": v["window"], "pc": _dec(v["pc"], digits), "retained": v["retained"]}
                for v in self.variants_used
            ],
        }

    def to_json(self, digits: int = 25, **extra) -> str:
        return json.dumps({**extra, **self.report(digits)}, indent=2)


def exponent_preset(cls: str, count: int = 8) -> list:
    """Correction exponents for the two lattice classes: A = 6,7,8,...; B = 4,6,8,..."""
    cls = cls.upper()
    if cls == "A":
        return [6 + k for k in range(count)]
    if cls == "B":
        return [4 + 2 * k for k in range(count)]
    raise ValueError(f"unknown exponent class {cls!r}")


def _fit_variants(s, exponents, term_counts, windows, slack):
    out = {}
    for K in term_counts:
        ws = windows if windows is not None else [K + d for d in slack]
        for w in ws:
            if K > len(exponents) or w < K + 1 or w > len(s):
                if windows is not None:
                    warnings.warn(f"{K} terms on {w} points is under-determined or exceeds the data; skipped", stacklevel=3)
                continue
            t = s.tail(w)
            rows = [[mpmath.mpf(1)] + [mpmath.power(n, -mpmath.mpf(d)) for d in exponents[:K]] for n in t.widths]
            sol = _lstsq(rows, [t[n] for n in t.widths])
            if sol is not None:
                out[(K, w)] = sol
    return out


def _choose(variants):
    """Term count whose windows agree best, then its widest window."""
    by_k = {}
    for (K, w), sol in variants.items():
        by_k.setdefault(K, []).append((w, sol[0]))
    spread = {}
    for K, items in by_k.items():
        vals = [v for _, v in items]
        spread[K] = (max(vals) - min(vals)) if len(vals) > 1 else mpmath.inf
    if all(mpmath.isinf(v) for v in spread.values()):
        K = max(by_k)
    else:
        K = min(spread, key=lambda k: (spread[k], -k))
    return K, max(w for w, _ in by_k[K])


def extrapolate_pc(s: Series, exponents, term_counts=None, windows=None, *, slack=(1, 2, 3),
                   perturb=0.5) -> ScalingFit:
    """Fit ``p(n) = p_c + sum A_k n**(-D_k)`` over a grid of term counts and windows.

    A window ``w`` uses the ``w`` largest widths.  Without explicit
    ``windows`` each term count ``K`` is tried on ``K + d`` points for ``d``
    in ``slack``, so every variant leans on the widest data.  The central
    value is the widest window at the term count whose windows spread
    least; the error is the largest distance from it to any variant at that
    term count.  With ``perturb`` the central variant is refitted with the
    exponents beyond the third moved by that amount either way and the
    largest shift is recorded.
    """
    with mpmath.workdps(WORK_DPS):
        exps = [mpmath.mpf(d) for d in exponents]
        if not exps:
            raise ValueError("need at least one correction exponent")
        if any(b <= a for a, b in zip(exps, exps[1:])):
            raise ValueError("exponents must be strictly increasing")
        if term_counts is None:
            term_counts = range(1, min(len(exps), len(s) - 1) + 1)
        term_counts = list(term_counts)
        windows = None if windows is None else list(windows)
        variants = _fit_variants(s, exps, term_counts, windows, slack)
        if not variants:
            raise FitError("no extrapolation variant was solvable")
        K, w = _choose(variants)
        sol = variants[(K, w)]
        pc = sol[0]
        keep = {kw for kw in variants if kw[0] == K}
        err = max(abs(variants[kw][0] - pc) for kw in keep)
        table = [{"terms": k, "window": x, "pc": v[0], "retained": (k, x) in keep}
                 for (k, x), v in sorted(variants.items())]
        shift = None
        if perturb and K > 3:
            shift = mpmath.mpf(0)
            for sign in (-1, 1):
                alt = exps[:3] + [d + sign * mpmath.mpf(perturb) for d in exps[3:]]
                if any(b <= a for a, b in zip(alt, alt[1:])):
                    continue
                sol2 = _fit_variants(s, alt, [K], [w], slack).get((K, w))
                if sol2 is not None:
                    shift = max(shift, abs(sol2[0] - pc))
        return ScalingFit(exps[:K], sol[1:], pc, err, table, (K, w), shift)
