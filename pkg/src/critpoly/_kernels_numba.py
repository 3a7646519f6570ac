"""numba row-step kernel.

Sources are split into contiguous chunks, one per worker; each chunk
scatters into its own buffer and the buffers are summed in chunk order.
All arithmetic is on integer limbs, so the result does not depend on the
chunking at all.
"""

from __future__ import annotations

import warnings

import numpy as np
from numba import njit, prange

# an outdated system TBB only disables that layer; numba falls back to omp
warnings.filterwarnings("ignore", message="The TBB threading layer requires")

from .fixedpoint import LIMB_BITS, MASK, RADIX

EXIT = -1


@njit(cache=True, inline="always")
def _add_row(out, row, vals, L):
    for i in range(L):
        out[row, i] += vals[i]


@njit(cache=True, inline="always")
def _add_sink(sink, vals, L):
    for i in range(L):
        sink[i] += vals[i]


@njit(parallel=True, cache=True)
def _step(src, dst_open, dst_closed, mode, P, bounds, bufs, sinks):
    L = src.shape[1]
    nchunks = bounds.shape[0] - 1
    shift = np.uint64(LIMB_BITS)
    mask = np.uint64(MASK)
    radix = np.uint64(RADIX)
    for c in prange(nchunks):
        out = bufs[c]
        sink = sinks[c]
        op = np.zeros(L, dtype=np.uint64)
        cl = np.zeros(L, dtype=np.uint64)
        for s in range(bounds[c], bounds[c + 1]):
            w = src[s]
            do = dst_open[s]
            dc = dst_closed[s]
            if mode == 1:
                if do >= 0:
                    _add_row(out, do, w, L)
                elif do == EXIT:
                    _add_sink(sink, w, L)
                continue
            if mode == 2:
                if dc >= 0:
                    _add_row(out, dc, w, L)
                elif dc == EXIT:
                    _add_sink(sink, w, L)
                continue
            # open share: w * P truncated to L limbs
            for k in range(L):
                acc = np.uint64(0)
                for i in range(k + 1):
                    acc += w[i] * P[k - i]
                op[k] = acc
            for k in range(L - 1, 0, -1):
                op[k - 1] += op[k] >> shift
                op[k] &= mask
            # closed share: w - open
            borrow = np.uint64(0)
            for k in range(L - 1, 0, -1):
                t = w[k] + radix - op[k] - borrow
                cl[k] = t & mask
                borrow = np.uint64(1) - (t >> shift)
            cl[0] = w[0] - op[0] - borrow
            if do >= 0:
                _add_row(out, do, op, L)
            elif do == EXIT:
                _add_sink(sink, op, L)
            if dc >= 0:
                _add_row(out, dc, cl, L)
            elif dc == EXIT:
                _add_sink(sink, cl, L)


@njit(cache=True)
def _merge(bufs, sinks):
    out = bufs[0].copy()
    sink = sinks[0].copy()
    for c in range(1, bufs.shape[0]):
        out += bufs[c]
        sink += sinks[c]
    L = out.shape[1]
    shift = np.uint64(LIMB_BITS)
    mask = np.uint64(MASK)
    for r in range(out.shape[0]):
        for k in range(L - 1, 0, -1):
            out[r, k - 1] += out[r, k] >> shift
            out[r, k] &= mask
    for k in range(L - 1, 0, -1):
        sink[k - 1] += sink[k] >> shift
        sink[k] &= mask
    return out, sink


def row_step(src, dst_open, dst_closed, mode, P, n_out, workers=1):
    N, L = src.shape
    nchunks = max(1, workers)
    bounds = np.linspace(0, N, nchunks + 1).astype(np.int64)
    bufs = np.zeros((nchunks, n_out, L), dtype=np.uint64)
    sinks = np.zeros((nchunks, L), dtype=np.uint64)
    _step(src, dst_open, dst_closed, mode, P, bounds, bufs, sinks)
    return _merge(bufs, sinks)


@njit(cache=True)
def _classify_mask(nv, eu, ev, ewx, ewy, mask, parent, px, py, rank, bx, by):
    for a in range(nv):
        parent[a] = a
        px[a] = 0
        py[a] = 0
        rank[a] = 0
    for e in range(eu.shape[0]):
        if not (mask >> e) & 1:
            continue
        ru = eu[e]
        xu = 0
        yu = 0
        while parent[ru] != ru:
            xu += px[ru]
            yu += py[ru]
            ru = parent[ru]
        rv = ev[e]
        xv = 0
        yv = 0
        while parent[rv] != rv:
            xv += px[rv]
            yv += py[rv]
            rv = parent[rv]
        cx = xu + ewx[e] - xv
        cy = yu + ewy[e] - yv
        if ru != rv:
            parent[rv] = ru
            px[rv] = cx
            py[rv] = cy
            if rank[rv] == 2:
                rank[ru] = 2
                continue
            if rank[rv] == 0:
                continue
            cx = bx[rv]
            cy = by[rv]
        if (cx == 0 and cy == 0) or rank[ru] == 2:
            continue
        if rank[ru] == 0:
            rank[ru] = 1
            bx[ru] = cx
            by[ru] = cy
        elif bx[ru] * cy - by[ru] * cx != 0:
            rank[ru] = 2
    best = 0
    for a in range(nv):
        if parent[a] == a and rank[a] > best:
            best = rank[a]
    return best


@njit(parallel=True, cache=True)
def _enumerate(nv, eu, ev, ewx, ewy, bounds, counts):
    for c in prange(bounds.shape[0] - 1):
        parent = np.empty(nv, dtype=np.int64)
        px = np.empty(nv, dtype=np.int64)
        py = np.empty(nv, dtype=np.int64)
        rank = np.empty(nv, dtype=np.int64)
        bx = np.empty(nv, dtype=np.int64)
        by = np.empty(nv, dtype=np.int64)
        for mask in range(bounds[c], bounds[c + 1]):
            cls = _classify_mask(nv, eu, ev, ewx, ewy, mask, parent, px, py, rank, bx, by)
            size = 0
            m = mask
            while m:
                m &= m - 1
                size += 1
            counts[c, cls, size] += 1


def enumerate_classes(nv, eu, ev, ewx, ewy, bounds):
    """Subset counts per (class, size); class 0 = no winding, 1 = rank one, 2 = rank two."""
    counts = np.zeros((bounds.shape[0] - 1, 3, eu.shape[0] + 1), dtype=np.int64)
    _enumerate(nv, eu, ev, ewx, ewy, bounds, counts)
    return counts.sum(axis=0)
