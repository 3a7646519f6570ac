"""Backend selection for the hot kernels.

``CRITPOLY_BACKEND=numba`` (default when numba imports) or ``numpy``.
"""

from __future__ import annotations

import os

_CHOICES = ("numba", "numpy")


def backend_name() -> str:
    name = os.environ.get("CRITPOLY_BACKEND", "numba").strip().lower()
    if name not in _CHOICES:
        raise ValueError(f"CRITPOLY_BACKEND must be one of {_CHOICES}, got {name!r}")
    if name == "numba":
        try:
            import numba  # noqa: F401
        except ImportError:
            return "numpy"
    return name


def get_backend(name: str | None = None):
    """Module exposing ``row_step`` (and ``enumerate_classes`` for the oracle)."""
    name = name or backend_name()
    if name == "numba":
        from . import _kernels_numba as mod
    elif name == "numpy":
        from . import _kernels_numpy as mod
    else:
        raise ValueError(f"unknown backend {name!r}")
    return mod


def default_workers() -> int:
    return max(1, int(os.environ.get("CRITPOLY_WORKERS", "1")))
