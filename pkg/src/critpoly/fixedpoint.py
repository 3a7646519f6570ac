"""Multi-limb unsigned fixed-point numbers stored in numpy arrays.

A value is an array of ``L`` uint64 limbs in radix ``2**28``, most significant
first; limb 0 is the integer part and limbs 1..L-1 the fraction, so the
represented number is ``sum(limb[i] * 2**(-28*i))``.  A vector of values is a
``(N, L)`` array.  Fraction limbs are kept below ``2**28`` between kernel
calls; inside a kernel they may exceed it while partial sums accumulate.

Everything here is integer arithmetic, hence exactly reproducible.
"""

from __future__ import annotations

import math

import mpmath
import numpy as np

LIMB_BITS = 28
RADIX = 1 << LIMB_BITS
MASK = RADIX - 1
GUARD_BITS = 64


def limbs_for_digits(digits: int) -> int:
    bits = math.ceil(digits * math.log2(10)) + GUARD_BITS
    return 1 + -(-bits // LIMB_BITS)


def frac_bits(nlimbs: int) -> int:
    return LIMB_BITS * (nlimbs - 1)


def from_int(x: int, nlimbs: int) -> np.ndarray:
    """Limbs of the fixed-point number whose scaled integer is ``x``."""
    if x < 0:
        raise ValueError("fixed-point values are nonnegative")
    out = np.zeros(nlimbs, dtype=np.uint64)
    for i in range(nlimbs - 1, 0, -1):
        out[i] = x & MASK
        x >>= LIMB_BITS
    out[0] = x
    return out


def from_mpf(x, nlimbs: int) -> np.ndarray:
    """Round ``x`` (nonnegative) down to the fixed-point grid."""
    bits = frac_bits(nlimbs)
    if not x:
        return np.zeros(nlimbs, dtype=np.uint64)
    with mpmath.workprec(bits + 64 + max(0, int(mpmath.mag(x)))):
        scaled = int(mpmath.floor(mpmath.ldexp(mpmath.mpf(x), bits)))
    return from_int(scaled, nlimbs)


def to_int(row) -> int:
    x = 0
    for limb in row:
        x = (x << LIMB_BITS) + int(limb)
    return x


def to_mpf(row, exponent: int = 0):
    """Exact value of one limb row times ``2**exponent`` as an mpf."""
    x = to_int(row)
    return mpmath.ldexp(mpmath.mpf(x), exponent - frac_bits(len(row))) if x else mpmath.mpf(0)


def normalize(a: np.ndarray) -> np.ndarray:
    """Propagate carries in place so fraction limbs are below the radix."""
    L = a.shape[-1]
    for i in range(L - 1, 0, -1):
        carry = a[..., i] >> np.uint64(LIMB_BITS)
        a[..., i] &= np.uint64(MASK)
        a[..., i - 1] += carry
    return a


def approx(a: np.ndarray) -> np.ndarray:
    """float64 approximation of each row (for choosing scale factors only)."""
    L = a.shape[-1]
    scale = np.ldexp(1.0, -LIMB_BITS * np.arange(L))
    return a.astype(np.float64) @ scale


def shift(a: np.ndarray, k: int) -> np.ndarray:
    """Multiply every row by ``2**k``, truncating bits shifted out on the right.

    The caller guarantees the result still fits (limb 0 below ``2**63``).
    """
    L = a.shape[-1]
    # widen so every limb, including the integer part, is below the radix
    x = np.zeros(a.shape[:-1] + (L + 2,), dtype=np.uint64)
    x[..., 2:] = a
    normalize(x)
    y = np.zeros_like(x)
    q, r = divmod(abs(k), LIMB_BITS)
    W = L + 2
    R = np.uint64(r)
    C = np.uint64(LIMB_BITS - r)
    M = np.uint64(MASK)
    for j in range(W):
        if k >= 0:
            s = j + q
            if s >= W:
                break
            v = x[..., s] << R
            if j:
                v &= M
            if r and s + 1 < W:
                v |= x[..., s + 1] >> C
        else:
            s = j - q
            if s < 0:
                continue
            v = x[..., s] >> R
            if r and s >= 1:
                v |= (x[..., s - 1] << C) & M
        y[..., j] = v
    out = y[..., 2:].copy()
    out[..., 0] += (y[..., 0] << np.uint64(2 * LIMB_BITS)) + (y[..., 1] << np.uint64(LIMB_BITS))
    return out


def is_zero(a: np.ndarray) -> bool:
    return not a.any()
