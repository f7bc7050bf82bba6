"""Backend selection for the Bessel kernels.

The compiled extension is used when it imports cleanly; otherwise the numpy
fallback is used.  Setting ``TIWIRE_PURE_PYTHON=1`` forces the fallback.
"""
from __future__ import annotations

import os

import numpy as np

from . import _kernels_py

_ext = None
if os.environ.get("TIWIRE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels_ext as _ext
    except ImportError:  # extension not built
        _ext = None

BACKEND = "compiled" if _ext is not None else "python"
_impl = _ext if _ext is not None else _kernels_py


def get_backend(name: str | None = None):
    """Return the kernel module called ``name`` ("compiled" or "python")."""
    if name is None:
        return _impl
    if name == "python":
        return _kernels_py
    if name == "compiled":
        if _ext is None:
            raise ImportError("compiled kernels are not available")
        return _ext
    raise ValueError(f"unknown backend {name!r}")


def bessel_j(n: int, x) -> np.ndarray:
    """J_n(x) for integer n (any sign) and real x >= 0, same shape as ``x``."""
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 0):
        raise ValueError("bessel_j requires x >= 0")
    m = abs(int(n))
    out = _impl.jn(m, xa).reshape(xa.shape)
    if n < 0 and m % 2:
        out = -out
    return out


def bessel_j_table(nmax: int, x) -> np.ndarray:
    """J_0..J_nmax at ``x``; shape ``(nmax + 1,) + x.shape``."""
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 0):
        raise ValueError("bessel_j_table requires x >= 0")
    return _impl.jn_table(int(nmax), xa).reshape((nmax + 1,) + xa.shape)
