"""Lattices as periodic row programs on the frontier of a cylinder.

A row program is written for one unit cell contributing ``width_per_cell``
frontier slots.  Steps are

* ``V s [class]`` -- bond from the vertex in slot ``s`` to a fresh vertex one
  row up, which then occupies the slot;
* ``H s t [class]`` -- bond between the vertices of two neighbouring slots.

A slot reference may carry a ``-`` (previous cell) or ``+`` (next cell)
suffix.  The weight class is ``p`` (an ordinary bond, the default), ``open``
(always present; used to copy a vertex into a spare slot) or ``closed``
(never present; ``V s closed`` turns a slot into an isolated placeholder).

Replication is cell-major: the body of a sweep runs for cell 0, 1, ..., c-1
in turn.  Cell 0 cannot see the final state of cell c-1 when it starts, so
its body is split at its first step that refers to another cell and the rest
of it runs after cell c-1.  A program may hold several sweeps (separated by a
``sweep`` line in the text format), run one after another.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

__all__ = [
    "CellStep",
    "CylinderProgram",
    "LatticeSpec",
    "LatticeSyntaxError",
    "LatticeValidationError",
    "ParityError",
    "RowProgram",
    "catalog",
    "get_lattice",
    "instantiate",
    "parse_lattice_file",
    "serialize",
    "trace",
]

WEIGHT_CLASSES = ("p", "open", "closed")
CATALOG_ORDER = (
    "square",
    "triangular",
    "hexagonal",
    "kagome",
    "four-eight",
    "frieze",
    "three-twelve",
    "cross",
    "snub-square",
    "snub-hexagonal",
    "ruby",
)


class LatticeSyntaxError(ValueError):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


class LatticeValidationError(ValueError):
    pass


class ParityError(ValueError):
    pass


@dataclass(frozen=True)
class CellStep:
    kind: str  # "V" or "H"
    a: tuple[int, int]  # (slot, cell offset)
    b: tuple[int, int] | None = None
    wclass: str = "p"

    @property
    def crosses_cells(self) -> bool:
        return self.a[1] != 0 or (self.b is not None and self.b[1] != 0)

    def __str__(self) -> str:
        refs = [self.a] if self.b is None else [self.a, self.b]
        suffix = {0: "", 1: "+", -1: "-"}
        text = " ".join([self.kind] + [f"{s}{suffix[d]}" for s, d in refs])
        return text if self.wclass == "p" else f"{text} {self.wclass}"


@dataclass(frozen=True)
class RowProgram:
    width_per_cell: int
    sweeps: tuple[tuple[CellStep, ...], ...]

    @property
    def steps(self) -> tuple[CellStep, ...]:
        return tuple(s for sweep in self.sweeps for s in sweep)

    def bonds_per_cell(self) -> int:
        return sum(1 for s in self.steps if s.wclass == "p")


@dataclass(frozen=True)
class CylinderProgram:
    """A row program replicated around a cylinder of ``width`` frontier slots."""

    name: str
    n: int
    width: int
    steps: tuple[tuple[str, int, int, str], ...] = field(repr=False)


@dataclass(frozen=True)
class LatticeSpec:
    name: str
    program: RowProgram
    parity: str = "any"
    exact_threshold: str | None = None
    note: str = ""
    exponent_class: str | None = None  # "A" -> {6,7,8,...}, "B" -> {4,6,8,...}

    @property
    def cell_span(self) -> int:
        """Width units covered by one program cell (2 for even-parity lattices)."""
        return 2 if self.parity == "even" else 1

    def legal_widths(self, upto: int) -> list[int]:
        return [n for n in range(1, upto + 1) if n % self.cell_span == 0]


def _abs_pos(ref: tuple[int, int], per_cell: int) -> int:
    return ref[1] * per_cell + ref[0]


def _slot(x: int, ref: tuple[int, int], cells: int, per_cell: int) -> int:
    return ((x + ref[1]) % cells) * per_cell + ref[0]


def _expand(program: RowProgram, cells: int) -> list[tuple[str, int, int, str]]:
    S = program.width_per_cell
    out: list[tuple[str, int, int, str]] = []

    def emit(x, steps):
        for st in steps:
            if st.kind == "V":
                out.append(("V", _slot(x, st.a, cells, S), -1, st.wclass))
            else:
                a, b = st.a, st.b
                if _abs_pos(a, S) > _abs_pos(b, S):
                    a, b = b, a
                out.append(("H", _slot(x, a, cells, S), _slot(x, b, cells, S), st.wclass))

    for body in program.sweeps:
        split = next((k for k, st in enumerate(body) if st.crosses_cells), len(body))
        emit(0, body[:split])
        for x in range(1, cells):
            emit(x, body)
        emit(0, body[split:])
    return out


def instantiate(spec: LatticeSpec, n: int) -> CylinderProgram:
    """Replicate ``spec``'s row program around a cylinder of width ``n``."""
    if n < 1:
        raise ValueError("width must be at least 1")
    if n % spec.cell_span:
        raise ParityError(f"lattice {spec.name!r} requires an even width, got n={n}")
    cells = n // spec.cell_span
    steps = tuple(_expand(spec.program, cells))
    return CylinderProgram(spec.name, n, cells * spec.program.width_per_cell, steps)


# -- tracing ---------------------------------------------------------------


class _DSU:
    def __init__(self):
        self.parent: list[int] = []
        self.spare: set[int] = set()  # placeholder vertices never joined to anything

    def make(self) -> int:
        self.parent.append(len(self.parent))
        return len(self.parent) - 1

    def find(self, a: int) -> int:
        p = self.parent
        while p[a] != a:
            p[a] = p[p[a]]
            a = p[a]
        return a

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        self.spare.discard(ra)
        self.spare.discard(rb)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def _run_rows(prog: CylinderProgram, rows: int, dsu: _DSU, slots: list[int], edges: list, record_from: int = 0):
    layouts = []
    for r in range(rows):
        for kind, i, j, wc in prog.steps:
            if kind == "V":
                new = dsu.make()
                if wc == "closed":
                    dsu.spare.add(new)
                if wc == "p" and r >= record_from:
                    edges.append((slots[i], new))
                elif wc == "open":
                    dsu.union(slots[i], new)
                slots[i] = new
            elif wc == "p":
                if r >= record_from:
                    edges.append((slots[i], slots[j]))
            elif wc == "open":
                dsu.union(slots[i], slots[j])
        layouts.append((list(slots), _layout_signature(slots, dsu)))
    return layouts


def _layout_signature(slots, dsu):
    roots = [dsu.find(s) for s in slots]
    relabel: dict[int, int] = {}
    sig = []
    for r in roots:
        if r in dsu.spare:
            sig.append(-1)
            continue
        sig.append(relabel.setdefault(r, len(relabel)))
    return tuple(sig)


def trace(prog: CylinderProgram, rows: int, torus: bool = False):
    """Lattice graph generated by ``rows`` applications of ``prog``.

    Returns a ``networkx.MultiGraph`` whose nodes are vertex ids; placeholder
    vertices that never receive a bond are dropped.  With ``torus=True`` the
    frontier after the last row is glued back onto the frontier after a
    warm-up row, giving a torus of ``rows`` rows.
    """
    import networkx as nx

    dsu = _DSU()
    slots = [dsu.make() for _ in range(prog.width)]
    edges: list[tuple[int, int]] = []
    if torus:
        _run_rows(prog, 1, dsu, slots, [], record_from=1)
        glue = list(slots)
        _run_rows(prog, rows, dsu, slots, edges)
        for a, b in zip(glue, slots):
            dsu.union(a, b)
    else:
        _run_rows(prog, rows, dsu, slots, edges)
    g = nx.MultiGraph()
    for a, b in edges:
        g.add_edge(dsu.find(a), dsu.find(b))
    return g


def _check_program(name: str, program: RowProgram, cell_span: int) -> None:
    S = program.width_per_cell
    if not program.steps:
        raise LatticeValidationError(f"{name}: program has no steps")
    if not any(s.wclass == "p" for s in program.steps):
        raise LatticeValidationError(f"{name}: program has no percolating bond")
    for st in program.steps:
        refs = [st.a] if st.b is None else [st.a, st.b]
        for slot, d in refs:
            if not 0 <= slot < S:
                raise LatticeValidationError(f"{name}: slot {slot} out of range in step '{st}'")
            if d not in (-1, 0, 1):
                raise LatticeValidationError(f"{name}: bad cell offset in step '{st}'")
        if st.kind == "H" and abs(_abs_pos(st.a, S) - _abs_pos(st.b, S)) != 1:
            raise LatticeValidationError(f"{name}: step '{st}' joins non-adjacent strands")
        if st.wclass not in WEIGHT_CLASSES:
            raise LatticeValidationError(f"{name}: unknown weight class in step '{st}'")
    advanced = {st.a[0] for st in program.steps if st.kind == "V"}
    if advanced != set(range(S)):
        missing = sorted(set(range(S)) - advanced)
        raise LatticeValidationError(f"{name}: strands {missing} are never advanced")
    # the frontier must return to the same cut: after the first row every row
    # must leave the slots in the same arrangement, holding only new vertices
    spec = LatticeSpec(name, program, "even" if cell_span == 2 else "any")
    prog = instantiate(spec, 3 * cell_span)
    dsu = _DSU()
    slots = [dsu.make() for _ in range(prog.width)]
    edges: list = []
    layouts = _run_rows(prog, 3, dsu, slots, edges)
    sigs = [sig for _, sig in layouts[1:]]
    if sigs[0] != sigs[1]:
        raise LatticeValidationError(f"{name}: frontier does not return to a straight cut")
    before = {dsu.find(v) for v in layouts[1][0]}
    if any(dsu.find(v) in before and dsu.find(v) not in dsu.spare for v in layouts[2][0]):
        raise LatticeValidationError(f"{name}: a frontier vertex is never advanced")


# -- text format -----------------------------------------------------------

_REF = re.compile(r"^(\d+)([+-]?)$")


def _parse_ref(tok: str, lineno: int) -> tuple[int, int]:
    m = _REF.match(tok)
    if not m:
        raise LatticeSyntaxError(lineno, f"bad strand reference {tok!r}")
    return int(m.group(1)), {"": 0, "+": 1, "-": -1}[m.group(2)]


def parse_lattice_file(text: str) -> LatticeSpec:
    """Parse a lattice description.

    Line 1 ``lattice <name> parity=<any|even>``, line 2 ``cell <k>``, then
    optional ``exact <decimal>``, ``class <A|B>`` and ``note <text>`` lines
    followed by one step per line; ``sweep`` starts a new sweep.
    """
    lines = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if line:
            lines.append((lineno, line))
    if not lines or not lines[0][1].startswith("lattice "):
        raise LatticeSyntaxError(lines[0][0] if lines else 1, "expected 'lattice <name> parity=<any|even>'")
    lineno, line = lines[0]
    toks = line.split()
    if len(toks) != 3 or not toks[2].startswith("parity=") or toks[2][7:] not in ("any", "even"):
        raise LatticeSyntaxError(lineno, "expected 'lattice <name> parity=<any|even>'")
    name, parity = toks[1], toks[2][7:]
    if len(lines) < 2 or not lines[1][1].startswith("cell "):
        raise LatticeSyntaxError(lines[1][0] if len(lines) > 1 else lineno + 1, "expected 'cell <width_per_cell>'")
    lineno, line = lines[1]
    try:
        per_cell = int(line.split()[1])
        if per_cell < 1 or len(line.split()) != 2:
            raise ValueError
    except ValueError:
        raise LatticeSyntaxError(lineno, "cell width must be a positive integer") from None

    exact = None
    note = ""
    eclass = None
    sweeps: list[list[CellStep]] = [[]]
    for lineno, line in lines[2:]:
        toks = line.split()
        head = toks[0]
        if head == "exact":
            exact = toks[1] if len(toks) == 2 else None
            if exact is None or not re.fullmatch(r"\d*\.\d+|\d+", exact):
                raise LatticeSyntaxError(lineno, "exact threshold must be a decimal literal")
        elif head == "note":
            note = line[4:].strip()
        elif head == "class":
            if len(toks) != 2 or toks[1] not in ("A", "B"):
                raise LatticeSyntaxError(lineno, "class must be A or B")
            eclass = toks[1]
        elif head == "sweep":
            if sweeps[-1]:
                sweeps.append([])
        elif head in ("V", "H"):
            nref = 1 if head == "V" else 2
            if len(toks) not in (nref + 1, nref + 2):
                raise LatticeSyntaxError(lineno, f"{head} takes {nref} strand reference(s) and an optional class")
            refs = [_parse_ref(t, lineno) for t in toks[1:nref + 1]]
            wclass = toks[nref + 1] if len(toks) == nref + 2 else "p"
            if wclass not in WEIGHT_CLASSES:
                raise LatticeSyntaxError(lineno, f"unknown weight class {wclass!r}")
            sweeps[-1].append(CellStep(head, refs[0], refs[1] if nref == 2 else None, wclass))
        else:
            raise LatticeSyntaxError(lineno, f"unknown directive {head!r}")
    program = RowProgram(per_cell, tuple(tuple(s) for s in sweeps if s))
    _check_program(name, program, 2 if parity == "even" else 1)
    return LatticeSpec(name, program, parity, exact, note, eclass)


def serialize(spec: LatticeSpec) -> str:
    out = [f"lattice {spec.name} parity={spec.parity}", f"cell {spec.program.width_per_cell}"]
    if spec.exact_threshold:
        out.append(f"exact {spec.exact_threshold}")
    if spec.exponent_class:
        out.append(f"class {spec.exponent_class}")
    if spec.note:
        out.append(f"note {spec.note}")
    for k, sweep in enumerate(spec.program.sweeps):
        if k:
            out.append("sweep")
        out.extend(str(st) for st in sweep)
    return "\n".join(out) + "\n"


@lru_cache(maxsize=None)
def _load_catalog() -> tuple[LatticeSpec, ...]:
    pkg = resources.files("critpoly") / "data" / "lattices"
    specs = {}
    for entry in pkg.iterdir():
        if entry.name.endswith(".lat"):
            spec = parse_lattice_file(entry.read_text(encoding="utf-8"))
            specs[spec.name] = spec
    return tuple(specs[name] for name in CATALOG_ORDER if name in specs)


def catalog() -> list[LatticeSpec]:
    """The built-in Archimedean lattices."""
    return list(_load_catalog())


def get_lattice(name: str) -> LatticeSpec:
    key = name.lower().replace("_", "-").replace(" ", "-")
    aliases = {"honeycomb": "hexagonal", "snub-hex": "snub-hexagonal", "4-8": "four-eight", "3-12": "three-twelve"}
    key = aliases.get(key, key)
    for spec in _load_catalog():
        if spec.name == key:
            return spec
    raise KeyError(f"unknown lattice {name!r}")
