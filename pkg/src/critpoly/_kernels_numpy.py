"""Pure-numpy row-step kernel (reference path, no JIT)."""

from __future__ import annotations

import numpy as np

from .fixedpoint import LIMB_BITS, MASK, RADIX, normalize

EXIT = -1


def mul_trunc(w: np.ndarray, P: np.ndarray) -> np.ndarray:
    """Row-wise product ``w * P`` rounded down to the limb grid."""
    N, L = w.shape
    cols = np.zeros((N, L), dtype=np.uint64)
    for j in range(L):
        pj = P[j]
        if pj == 0:
            continue
        cols[:, j:] += w[:, : L - j] * pj
    return normalize(cols)


def sub(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise ``a - b`` for normalized operands with ``a >= b``."""
    out = np.empty_like(a)
    borrow = np.zeros(a.shape[0], dtype=np.uint64)
    L = a.shape[1]
    for i in range(L - 1, 0, -1):
        t = a[:, i] + np.uint64(RADIX) - b[:, i] - borrow
        out[:, i] = t & np.uint64(MASK)
        borrow = np.uint64(1) - (t >> np.uint64(LIMB_BITS))
    out[:, 0] = a[:, 0] - b[:, 0] - borrow
    return out


def _scatter(out, sink, dst, vals):
    keep = dst >= 0
    if keep.any():
        np.add.at(out, dst[keep], vals[keep])
    gone = dst == EXIT
    if gone.any():
        sink += vals[gone].sum(axis=0, dtype=np.uint64)


def row_step(src, dst_open, dst_closed, mode, P, n_out, workers=1):
    N, L = src.shape
    bounds = np.linspace(0, N, max(1, workers) + 1).astype(np.int64)
    bufs = []
    for c in range(len(bounds) - 1):
        lo, hi = bounds[c], bounds[c + 1]
        out = np.zeros((n_out, L), dtype=np.uint64)
        sink = np.zeros(L, dtype=np.uint64)
        w = src[lo:hi]
        if mode == 0:
            op = mul_trunc(w, P)
            _scatter(out, sink, dst_open[lo:hi], op)
            _scatter(out, sink, dst_closed[lo:hi], sub(w, op))
        elif mode == 1:
            _scatter(out, sink, dst_open[lo:hi], w)
        else:
            _scatter(out, sink, dst_closed[lo:hi], w)
        bufs.append((out, sink))
    out, sink = bufs[0]
    for o, s in bufs[1:]:
        out += o
        sink += s
    return normalize(out), normalize(sink)
