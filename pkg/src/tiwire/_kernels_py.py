"""Pure numpy implementations of the Bessel kernels.

These mirror ``_kernels_ext.pyx`` one-to-one and are used whenever the
compiled extension is unavailable (or ``TIWIRE_PURE_PYTHON=1`` is set).

Integer orders only.  Arguments below ``SERIES_CUTOFF`` use the ascending
power series; everything else uses Miller's downward recurrence normalised
with ``J_0 + 2 sum_k J_2k = 1``.
"""
from __future__ import annotations

import math

import numpy as np

SERIES_CUTOFF = 1.0
_SERIES_TERMS = 30
_RESCALE = 1e250


def start_order(nmax: int, x: float) -> int:
    """Even starting order for the downward recurrence."""
    m = max(nmax, int(x))
    m += 20 + int(math.sqrt(40.0 * (m + 1)))
    return m + (m % 2)


def _series(n: int, x: np.ndarray) -> np.ndarray:
    half = 0.5 * x
    out = np.zeros_like(x)
    nz = half > 0
    if n == 0:
        term = np.ones_like(x)
    else:
        term = np.zeros_like(x)
        term[nz] = np.exp(n * np.log(half[nz]) - math.lgamma(n + 1))
    q = half * half
    for k in range(_SERIES_TERMS):
        out += term
        term = -term * q / ((k + 1) * (k + 1 + n))
    return out


def _miller(nmax: int, x: np.ndarray) -> np.ndarray:
    """Orders 0..nmax at every x (all x >= SERIES_CUTOFF)."""
    table = np.zeros((nmax + 1,) + x.shape)
    if x.size == 0:
        return table
    m = start_order(nmax, float(x.max()))
    inv = 2.0 / x
    jp = np.zeros_like(x)
    j = np.full_like(x, 1e-30)
    norm = np.zeros_like(x)
    for k in range(m, 0, -1):
        jm = k * inv * j - jp
        jp, j = j, jm
        if k - 1 <= nmax:
            table[k - 1] = j
        if k - 1 > 0 and (k - 1) % 2 == 0:
            norm += 2.0 * j
        big = np.abs(j) > _RESCALE
        if big.any():
            s = np.where(big, 1.0 / _RESCALE, 1.0)
            j *= s
            jp *= s
            norm *= s
            table *= s
    norm += j
    return table / norm


def jn_table(nmax: int, x) -> np.ndarray:
    """J_0..J_nmax evaluated at ``x`` (x >= 0); shape ``(nmax + 1, len(x))``."""
    x = np.ascontiguousarray(x, dtype=float).ravel()
    out = np.empty((nmax + 1, x.size))
    small = x < SERIES_CUTOFF
    if small.any():
        xs = x[small]
        for n in range(nmax + 1):
            out[n, small] = _series(n, xs)
    if (~small).any():
        out[:, ~small] = _miller(nmax, x[~small])
    return out


def jn(n: int, x) -> np.ndarray:
    """J_n at ``x`` for integer ``n >= 0`` and ``x >= 0``."""
    x = np.ascontiguousarray(x, dtype=float).ravel()
    out = np.empty(x.size)
    small = x < SERIES_CUTOFF
    if small.any():
        out[small] = _series(n, x[small])
    if (~small).any():
        out[~small] = _miller(n, x[~small])[n]
    return out
