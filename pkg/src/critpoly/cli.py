"""Command-line front end: ``python -m critpoly {solve,extrapolate,oracle,catalog}``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import sys
import time
import warnings
from dataclasses import asdict, dataclass, field
from importlib import metadata

import mpmath

from . import connectivity, oracle
from .extrapolate import (DegenerateSeriesError, FitError, RangeError, Series, effective_exponents,
                          exponent_preset, extrapolate_pc, fit_exponent_limit)
from .lattice import (LatticeSyntaxError, LatticeValidationError, ParityError, catalog, get_lattice, instantiate,
                      parse_lattice_file)
from .threshold import BracketError, NonConvergenceError, ResultLedger, SolverConfig, find_threshold
from .transfer import BondWeight, DivergenceError, Precision

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_CONVERGENCE = 3
EXIT_CAPACITY = 4

LEDGER_ENV = "CRITPOLY_LEDGER"
DEFAULT_LEDGER = "critpoly-ledger.jsonl"

log = logging.getLogger("critpoly")


class InputError(ValueError):
    pass


@dataclass
class RunManifest:
    command: str
    arguments: dict
    lattice: str | None = None
    widths: list = field(default_factory=list)
    precision: dict = field(default_factory=dict)
    ledger: str | None = None
    outputs: list = field(default_factory=list)
    wall_time: float = 0.0
    versions: dict = field(default_factory=dict)

    def write(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _versions():
    out = {"python": platform.python_version()}
    for pkg in ("artifact", "numpy", "numba", "mpmath", "networkx"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            pass
    return out


def parse_widths(text: str) -> list[int]:
    """``"3"``, ``"2..6"`` or ``"1,2,5"`` (ranges may be mixed into lists)."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            a, b = part.split("..", 1)
            lo, hi = int(a), int(b)
            if hi < lo:
                raise InputError(f"empty width range {part!r}")
            out.extend(range(lo, hi + 1))
        elif part:
            out.append(int(part))
    if not out or min(out) < 1:
        raise InputError(f"bad width specification {text!r}")
    return sorted(set(out))


def _int_list(text):
    try:
        return parse_widths(text)
    except ValueError as exc:
        raise InputError(str(exc)) from None


def _load_lattice(args):
    if args.lattice_file:
        with open(args.lattice_file, encoding="utf-8") as fh:
            return parse_lattice_file(fh.read())
    if not args.lattice:
        raise InputError("give --lattice or --lattice-file")
    try:
        return get_lattice(args.lattice)
    except KeyError as exc:
        raise InputError(str(exc)) from None


def _manifest_path(args, default):
    return args.manifest or default


def cmd_solve(args, out) -> int:
    t0 = time.time()
    spec = _load_lattice(args)
    widths = _int_list(args.width)
    for n in widths:
        instantiate(spec, n)  # parity check before any work
    delta = mpmath.mpf(args.tol) if args.tol else mpmath.mpf(10) ** -(args.digits * 2 // 3)
    prec = Precision(args.digits, delta)
    ledger_path = args.ledger or os.environ.get(LEDGER_ENV) or DEFAULT_LEDGER
    ledger = ResultLedger(ledger_path)
    guess = BondWeight.from_p(args.guess) if args.guess else None
    shown = args.show or min(args.digits, 40)
    rows = []
    for k, n in enumerate(widths):
        cfg = SolverConfig(prec, guess=guess if k == 0 else None, workers=args.workers,
                           max_householder=args.max_steps)
        rec = find_threshold(spec, n, cfg, ledger)
        rows.append(rec)
        print(f"{spec.name:>14}  n={n:<3} p_c = {rec.p_root[:shown + 2]}  "
              f"steps={rec.householder_steps} iterations={rec.power_iterations_total}", file=out)
    man = RunManifest("solve", vars(args) | {"func": None}, spec.name, widths,
                      {"digits": args.digits, "delta": mpmath.nstr(delta, 5)}, ledger_path, [ledger_path],
                      round(time.time() - t0, 3), _versions())
    man.write(_manifest_path(args, ledger_path + ".manifest.json"))
    return EXIT_OK


def cmd_extrapolate(args, out) -> int:
    t0 = time.time()
    with open(args.input, encoding="utf-8") as fh:
        try:
            s = Series.from_csv(fh.read(), provenance=os.path.basename(args.input))
        except ValueError as exc:
            raise InputError(f"{args.input}: {exc}") from None
    if len(s) < 4:
        raise InputError(f"{args.input}: {len(s)} points cannot determine a scaling fit (need at least 4)")
    if args.exponents:
        exps = [mpmath.mpf(x) for x in args.exponents.split(",")]
    else:
        exps = exponent_preset(args.preset, args.count)
    terms = _int_list(args.terms) if args.terms else None
    windows = _int_list(args.windows) if args.windows else None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fit = extrapolate_pc(s, exps, terms, windows)
        report = {"input": args.input, "points": len(s)}
        try:
            d = effective_exponents(s)
            report["effective_exponents"] = {str(n): mpmath.nstr(v, 8) for n, v in d.points.items()}
            orders, wins = [k for k in (3, 4, 5) if k + 2 <= len(d)], [w for w in (6, 7, 8) if w <= len(d)]
            if orders and wins:
                lim = fit_exponent_limit(d, orders, wins)
                report["delta1"] = {"limit": mpmath.nstr(lim.limit, 6), "error": mpmath.nstr(lim.error, 3)}
        except (RangeError, DegenerateSeriesError, FitError, ValueError) as exc:
            report["effective_exponents_error"] = str(exc)
    man_path = _manifest_path(args, (args.output or "extrapolate") + ".manifest.json")
    report["manifest"] = man_path
    text = fit.to_json(args.digits, **report)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    print(text, file=out)
    RunManifest("extrapolate", vars(args) | {"func": None}, None, s.widths,
                {"work_dps": 80}, None, [args.output] if args.output else [],
                round(time.time() - t0, 3), _versions()).write(man_path)
    return EXIT_OK


def cmd_oracle(args, out) -> int:
    if args.basis:
        with open(args.basis, encoding="utf-8") as fh:
            try:
                basis = oracle.parse_basis_file(fh.read())
            except ValueError as exc:
                raise InputError(f"{args.basis}: {exc}") from None
    else:
        if not args.lattice:
            raise InputError("give --lattice with --cells, or --basis")
        try:
            lx, ly = oracle.parse_cells(args.cells)
            basis = oracle.torus_basis(args.lattice, lx, ly)
        except KeyError as exc:
            raise InputError(str(exc)) from None
    poly = oracle.critical_polynomial(basis, cap=args.cap, workers=args.workers)
    root = oracle.root_in_unit_interval(poly, args.digits)
    print(f"basis: {basis.provenance} ({len(basis.vertices)} vertices, {basis.n_edges} edges)", file=out)
    print("coefficients: " + " ".join(str(c) for c in poly.coefficients), file=out)
    print(f"polynomial: {poly}", file=out)
    print("root: " + mpmath.nstr(root, args.digits, min_fixed=-mpmath.inf, max_fixed=mpmath.inf, strip_zeros=False),
          file=out)
    return EXIT_OK


def cmd_catalog(args, out) -> int:
    for spec in catalog():
        exact = spec.exact_threshold or "-"
        print(f"{spec.name:<15} parity={spec.parity:<4} span={spec.cell_span} class={spec.exponent_class or '-'} "
              f"bonds/cell={spec.program.bonds_per_cell()} exact={exact[:22]}", file=out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="critpoly", description="Bond percolation thresholds from cylinder transfer matrices.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve for p_c(n) on cylinders")
    s.add_argument("--lattice")
    s.add_argument("--lattice-file")
    s.add_argument("--width", required=True, help="e.g. 4, 2..6 or 1,3,5")
    s.add_argument("--digits", type=int, default=60)
    s.add_argument("--tol", help="convergence threshold delta (default 10^-(2*digits/3))")
    s.add_argument("--guess", help="starting p for the first width")
    s.add_argument("--ledger", help=f"result ledger (default ${LEDGER_ENV} or {DEFAULT_LEDGER})")
    s.add_argument("--workers", type=int)
    s.add_argument("--max-steps", type=int, default=8, help="Householder steps allowed per width")
    s.add_argument("--show", type=int, help="digits printed in the summary")
    s.add_argument("--manifest")
    s.set_defaults(func=cmd_solve)

    e = sub.add_parser("extrapolate", help="finite-size extrapolation of a p_c(n) series")
    e.add_argument("--input", required=True)
    e.add_argument("--preset", default="A", choices=["A", "B", "a", "b"])
    e.add_argument("--count", type=int, default=12, help="number of preset exponents")
    e.add_argument("--exponents", help="explicit comma-separated exponents")
    e.add_argument("--terms", help="term counts, e.g. 1..8")
    e.add_argument("--windows", help="absolute windows, e.g. 6..10 (default: terms+1..terms+3)")
    e.add_argument("--digits", type=int, default=25)
    e.add_argument("--output")
    e.add_argument("--manifest")
    e.set_defaults(func=cmd_extrapolate)

    o = sub.add_parser("oracle", help="critical polynomial of a periodic basis")
    o.add_argument("--lattice")
    o.add_argument("--cells", default="1x1")
    o.add_argument("--basis", help="basis description file")
    o.add_argument("--digits", type=int, default=40)
    o.add_argument("--cap", type=int, default=oracle.DEFAULT_EDGE_CAP)
    o.add_argument("--workers", type=int)
    o.set_defaults(func=cmd_oracle)

    c = sub.add_parser("catalog", help="list built-in lattices")
    c.set_defaults(func=cmd_catalog)
    return ap


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args, out)
    except (oracle.CapacityError, connectivity.CapacityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except (NonConvergenceError, BracketError, DivergenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (InputError, ParityError, LatticeSyntaxError, LatticeValidationError, oracle.NonCanonicalPolynomialError,
            DegenerateSeriesError, FitError, RangeError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
