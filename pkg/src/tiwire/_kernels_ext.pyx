# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Bessel kernels; same contract as ``_kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, lgamma, sqrt, fabs

cnp.import_array()

cdef double SERIES_CUTOFF = 1.0
cdef int SERIES_TERMS = 30
cdef double RESCALE = 1e250


cdef inline int _start_order(int nmax, double x) nogil:
    cdef int m = nmax if nmax > <int>x else <int>x
    m += 20 + <int>sqrt(40.0 * (m + 1))
    return m + (m % 2)


cdef double _series(int n, double x) nogil:
    cdef double half = 0.5 * x
    cdef double term, total = 0.0, q = half * half
    cdef int k
    if n == 0:
        term = 1.0
    elif half <= 0.0:
        return 0.0
    else:
        term = exp(n * log(half) - lgamma(n + 1.0))
    for k in range(SERIES_TERMS):
        total += term
        term = -term * q / ((k + 1.0) * (k + 1.0 + n))
    return total


cdef void _miller_row(int nmax, double x, double* row) nogil:
    # fills row[0..nmax] with J_0..J_nmax at a single x >= SERIES_CUTOFF
    cdef int m = _start_order(nmax, x)
    cdef double inv = 2.0 / x
    cdef double jp = 0.0, j = 1e-30, jm, norm = 0.0, s
    cdef int k, i
    for i in range(nmax + 1):
        row[i] = 0.0
    for k in range(m, 0, -1):
        jm = k * inv * j - jp
        jp = j
        j = jm
        if k - 1 <= nmax:
            row[k - 1] = j
        if k - 1 > 0 and (k - 1) % 2 == 0:
            norm += 2.0 * j
        if fabs(j) > RESCALE:
            s = 1.0 / RESCALE
            j *= s
            jp *= s
            norm *= s
            for i in range(k - 1, nmax + 1):
                row[i] *= s
    norm += j
    for i in range(nmax + 1):
        row[i] /= norm


cdef double _miller_single(int n, double x) nogil:
    cdef int m = _start_order(n, x)
    cdef double inv = 2.0 / x
    cdef double jp = 0.0, j = 1e-30, jm, norm = 0.0, val = 0.0, s
    cdef int k
    for k in range(m, 0, -1):
        jm = k * inv * j - jp
        jp = j
        j = jm
        if k - 1 == n:
            val = j
        if k - 1 > 0 and (k - 1) % 2 == 0:
            norm += 2.0 * j
        if fabs(j) > RESCALE:
            s = 1.0 / RESCALE
            j *= s
            jp *= s
            norm *= s
            val *= s
    norm += j
    return val / norm


def jn(int n, x):
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64).ravel()
    cdef Py_ssize_t i, size = xv.shape[0]
    cdef cnp.ndarray[double, ndim=1] out = np.empty(size)
    cdef double[::1] ov = out
    with nogil:
        for i in range(size):
            if xv[i] < SERIES_CUTOFF:
                ov[i] = _series(n, xv[i])
            else:
                ov[i] = _miller_single(n, xv[i])
    return out


def jn_table(int nmax, x):
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64).ravel()
    cdef Py_ssize_t i, size = xv.shape[0]
    cdef int n
    cdef cnp.ndarray[double, ndim=2] out = np.empty((size, nmax + 1))
    cdef double[:, ::1] ov = out
    with nogil:
        for i in range(size):
            if xv[i] < SERIES_CUTOFF:
                for n in range(nmax + 1):
                    ov[i, n] = _series(n, xv[i])
            else:
                _miller_row(nmax, xv[i], &ov[i, 0])
    return np.ascontiguousarray(out.T)
