"""Connectivity states on the cut circle of a cylinder.

A state records how the ``width`` frontier points of a partially built
cylinder are connected through the part of the lattice below the cut.
Besides the partition itself every point carries an integer *seam offset*:
lifting a block to the universal cover (the strip obtained by cutting the
cylinder along the seam between point ``width - 1`` and point ``0``), point
``i`` sits at position ``i + width * offset[i]``.  Two already-connected
points that get joined by a bond whose lift does not respect these offsets
close a circuit around the cylinder.

In the open sector one block is *marked*: it is the cluster connected to the
bottom of the semi-infinite cylinder.  That cluster always winds (the bottom
row is a full circle), so its offsets are irrelevant and stored as zero.

Internally states are handled as hashable keys ``(labels, offsets, mark)``
with ``labels`` a restricted growth string and ``mark`` the marked label or
``-1``; :class:`ConnectivityState` is the public value type.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "CapacityError",
    "ConnectivityState",
    "InvalidMoveError",
    "SectorTag",
    "StateSpace",
    "StepTable",
    "advance",
    "close_state_space",
    "join",
    "start_state",
]

DEFAULT_STATE_CAP = 10**8

EXIT = -1
NO_BRANCH = -2


class SectorTag(str, enum.Enum):
    OPEN = "open"
    CLOSED = "closed"


class InvalidMoveError(ValueError):
    """A bond was requested between frontier points that are not neighbours."""


class CapacityError(RuntimeError):
    def __init__(self, count: int, cap: int):
        super().__init__(f"state count {count} exceeds cap {cap}")
        self.count = count
        self.cap = cap


Key = tuple  # (labels, offsets, mark)


def _canon(lab, off, mark: int) -> Key:
    relabel: dict[int, int] = {}
    base: dict[int, int] = {}
    nl = []
    no = []
    for l, o in zip(lab, off):
        r = relabel.get(l)
        if r is None:
            r = relabel[l] = len(relabel)
            base[l] = o
        nl.append(r)
        no.append(o - base[l])
    if mark >= 0:
        nm = relabel[mark]
        no = [0 if r == nm else o for r, o in zip(nl, no)]
    else:
        nm = -1
    return (tuple(nl), tuple(no), nm)


def _seam_step(i: int, j: int, width: int) -> tuple[int, int, int]:
    """Orient the bond (i, j) left to right; returns (left, right, seam crossing)."""
    if j == (i + 1) % width:
        return i, j, 1 if i == width - 1 else 0
    if i == (j + 1) % width:
        return j, i, 1 if j == width - 1 else 0
    raise InvalidMoveError(f"points {i} and {j} are not adjacent on a frontier of width {width}")


def _join_key(key: Key, i: int, j: int, width: int) -> tuple[Key, bool, bool]:
    """Returns (new key, wrapped, merged block is marked)."""
    lab, off, mark = key
    a, b, s = _seam_step(i, j, width)
    la, lb = lab[a], lab[b]
    if la == lb:
        return key, off[b] != off[a] + s, la == mark
    shift = off[a] + s - off[b]
    nl = list(lab)
    no = list(off)
    for k in range(width):
        if lab[k] == lb:
            nl[k] = la
            no[k] = off[k] + shift
    nm = la if mark == lb else mark
    return _canon(nl, no, nm), False, nm == la


def _advance_key(key: Key, i: int, bond_open: bool) -> tuple[Key | None, bool]:
    """Returns (new key or None on marked-cluster death, died)."""
    if bond_open:
        return key, False
    lab, off, mark = key
    li = lab[i]
    died = lab.count(li) == 1
    if died and li == mark:
        return None, True
    nl = list(lab)
    nl[i] = len(lab)  # fresh label, canonicalised below
    no = list(off)
    no[i] = 0
    return _canon(nl, no, mark), died


def start_state(width: int, sector: SectorTag) -> Key:
    if SectorTag(sector) is SectorTag.CLOSED:
        return (tuple(range(width)), (0,) * width, -1)
    return ((0,) * width, (0,) * width, 0)


@dataclass(frozen=True)
class ConnectivityState:
    """Canonical connectivity of the frontier points."""

    labels: tuple[int, ...]
    offsets: tuple[int, ...]
    mark: int | None = None

    def __post_init__(self):
        if len(self.labels) != len(self.offsets) or not self.labels:
            raise ValueError("labels and offsets must be nonempty and of equal length")
        key = _canon(self.labels, self.offsets, -1 if self.mark is None else self.mark)
        if key != self.key:
            raise ValueError(f"state is not in canonical form: {self.key} != {key}")

    @property
    def width(self) -> int:
        return len(self.labels)

    @property
    def key(self) -> Key:
        return (self.labels, self.offsets, -1 if self.mark is None else self.mark)

    @property
    def blocks(self) -> tuple[tuple[int, ...], ...]:
        out: list[list[int]] = [[] for _ in range(max(self.labels) + 1)]
        for point, label in enumerate(self.labels):
            out[label].append(point)
        return tuple(tuple(b) for b in out)

    @property
    def sector(self) -> SectorTag:
        return SectorTag.CLOSED if self.mark is None else SectorTag.OPEN

    @classmethod
    def from_key(cls, key: Key) -> "ConnectivityState":
        lab, off, mark = key
        return cls(tuple(lab), tuple(off), None if mark < 0 else mark)

    @classmethod
    def from_blocks(cls, width, blocks, marked=None, offsets=None) -> "ConnectivityState":
        """Build a state from an iterable of blocks.

        ``marked`` is the block (as an iterable of points) carrying the mark;
        ``offsets`` optionally maps point -> seam offset.
        """
        lab = [-1] * width
        for b, members in enumerate(blocks):
            for point in members:
                if lab[point] != -1:
                    raise ValueError(f"point {point} appears in two blocks")
                lab[point] = b
        if -1 in lab:
            raise ValueError("every frontier point must belong to a block")
        off = [0] * width if offsets is None else [offsets.get(i, 0) for i in range(width)]
        mark = -1 if marked is None else lab[min(marked)]
        return cls.from_key(_canon(lab, off, mark))

    def encode(self) -> tuple[int, ...]:
        """Flat integer code: restricted growth string, offsets, then mark (-1 if none)."""
        return self.labels + self.offsets + (self.key[2],)

    @classmethod
    def decode(cls, code) -> "ConnectivityState":
        code = tuple(int(c) for c in code)
        width = (len(code) - 1) // 2
        return cls.from_key((code[:width], code[width:2 * width], code[-1]))


def join(state: ConnectivityState, i: int, j: int) -> tuple[ConnectivityState, bool]:
    """Open a bond between neighbouring frontier points ``i`` and ``j``.

    ``(i, j)`` names the bond from ``i`` to its right neighbour ``j``; the
    bond ``(width - 1, 0)`` crosses the seam.  For width 2 the two orders
    name the two distinct bonds, for width 1 ``(0, 0)`` is the seam loop.
    Returns the merged state and whether the bond closed a winding circuit.
    """
    key, wrapped, _ = _join_key(state.key, i, j, state.width)
    return ConnectivityState.from_key(key), wrapped


def advance(state: ConnectivityState, i: int, bond_open: bool) -> tuple[ConnectivityState | None, bool]:
    """Replace point ``i`` by a fresh point one row up.

    Returns ``(state, died)``; ``state`` is None when the marked cluster
    detached from the frontier (an exit from the open sector).
    """
    if not 0 <= i < state.width:
        raise InvalidMoveError(f"point {i} outside frontier of width {state.width}")
    key, died = _advance_key(state.key, i, bond_open)
    return (None if key is None else ConnectivityState.from_key(key)), died


@dataclass(frozen=True)
class StepTable:
    """Transitions of one elementary step between consecutive levels.

    ``dst_open[s]`` / ``dst_closed[s]`` give the target index of source ``s``
    for the bond-open / bond-closed branch, ``EXIT`` (-1) for a sector exit
    and ``NO_BRANCH`` (-2) when the weight class forbids the branch.
    """

    kind: str
    wclass: str
    dst_open: np.ndarray
    dst_closed: np.ndarray
    n_out: int

    @property
    def n_in(self) -> int:
        return len(self.dst_open)


@dataclass(eq=False)
class StateSpace:
    """Row-boundary states of one sector, with the compiled row operator."""

    width: int
    sector: SectorTag
    keys: list
    index: dict
    tables: tuple = field(repr=False, default=())
    steps: tuple = field(repr=False, default=())

    def __len__(self) -> int:
        return len(self.keys)

    @property
    def states(self) -> list[ConnectivityState]:
        return [ConnectivityState.from_key(k) for k in self.keys]

    def state(self, i: int) -> ConnectivityState:
        return ConnectivityState.from_key(self.keys[i])

    def id_of(self, state: ConnectivityState) -> int:
        return self.index[state.key]

    @property
    def start_id(self) -> int:
        return self.index[start_state(self.width, self.sector)]

    @property
    def level_sizes(self) -> list[int]:
        return [t.n_in for t in self.tables]


def _branches(key, step, width, open_sector):
    """Targets of ``key`` under ``step`` for the open and closed bond branch."""
    kind, i, j, wclass = step
    if kind == "V":
        o = key if wclass != "closed" else NO_BRANCH
        if wclass != "open":
            c, _ = _advance_key(key, i, False)
            if c is None:
                c = EXIT
        else:
            c = NO_BRANCH
        return o, c
    c = key if wclass != "open" else NO_BRANCH
    if wclass == "closed":
        return NO_BRANCH, c
    o, wrapped, marked = _join_key(key, i, j, width)
    if wrapped and not (open_sector and marked):
        o = EXIT
    return o, c


def close_state_space(width: int, sector, program, cap: int = DEFAULT_STATE_CAP) -> StateSpace:
    """Breadth-first closure of the sector start state under ``program``.

    ``program`` is a concrete cylinder program (anything with ``width`` and a
    ``steps`` sequence of ``(kind, i, j, wclass)``).  Every intermediate level
    between steps is closed as well and the per-step transition tables are
    kept on the returned space.
    """
    sector = SectorTag(sector)
    if program.width != width:
        raise ValueError(f"program width {program.width} != requested width {width}")
    steps = list(program.steps)
    if not steps:
        raise ValueError("empty row program")
    S = len(steps)
    open_sector = sector is SectorTag.OPEN
    levels: list[dict] = [dict() for _ in range(S)]
    keys: list[list] = [[] for _ in range(S)]
    dst_o: list[list[int]] = [[] for _ in range(S)]
    dst_c: list[list[int]] = [[] for _ in range(S)]
    start = start_state(width, sector)
    levels[0][start] = 0
    keys[0].append(start)
    done = [0] * S

    while True:
        progressed = False
        for k in range(S):
            src = keys[k]
            nxt = (k + 1) % S
            lvl, nkeys = levels[nxt], keys[nxt]
            step = steps[k]
            do, dc = dst_o[k], dst_c[k]
            while done[k] < len(src):
                key = src[done[k]]
                done[k] += 1
                progressed = True
                targets = _branches(key, step, width, open_sector)
                for t, out in zip(targets, (do, dc)):
                    if isinstance(t, int):
                        out.append(t)
                        continue
                    idx = lvl.get(t)
                    if idx is None:
                        idx = lvl[t] = len(nkeys)
                        nkeys.append(t)
                        if idx >= cap:
                            raise CapacityError(idx + 1, cap)
                    out.append(idx)
        if not progressed:
            break

    tables = tuple(
        StepTable(
            kind=steps[k][0],
            wclass=steps[k][3],
            dst_open=np.asarray(dst_o[k], dtype=np.int64),
            dst_closed=np.asarray(dst_c[k], dtype=np.int64),
            n_out=len(keys[(k + 1) % S]),
        )
        for k in range(S)
    )
    return StateSpace(width=width, sector=sector, keys=keys[0], index=levels[0], tables=tables, steps=tuple(steps))
