# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels: counter-hash RNG words and the sequential reverse chain.

Must stay operation-for-operation identical to anosynth._kernels._pure;
the backend equivalence tests assert bit-exact agreement.
"""
import numpy as np

from libc.stdint cimport uint64_t


cdef inline uint64_t _mix64(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * <uint64_t>0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EB
    return z ^ (z >> 31)


def counter_words(key, start, n):
    """Return n pseudo-random uint64 words for counters start+1 .. start+n."""
    cdef uint64_t k = <uint64_t>key
    cdef uint64_t c0 = <uint64_t>start
    cdef Py_ssize_t m = n
    out = np.empty(m, dtype=np.uint64)
    cdef uint64_t[::1] view = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(m):
            view[i] = _mix64(k + (c0 + <uint64_t>i + 1) * <uint64_t>0x9E3779B97F4A7C15)
    return out


def posterior_chain(x, x0hat, a, b, s, eps):
    """Run m sequential reverse steps x <- a[i]*x0hat + b[i]*x + s[i]*eps[i]."""
    out = np.array(x, dtype=np.float64, copy=True)
    cdef double[::1] xv = out
    cdef const double[::1] x0 = np.ascontiguousarray(x0hat, dtype=np.float64)
    cdef const double[::1] av = np.ascontiguousarray(a, dtype=np.float64)
    cdef const double[::1] bv = np.ascontiguousarray(b, dtype=np.float64)
    cdef const double[::1] sv = np.ascontiguousarray(s, dtype=np.float64)
    cdef const double[:, ::1] ev = np.ascontiguousarray(eps, dtype=np.float64)
    cdef Py_ssize_t m = av.shape[0]
    cdef Py_ssize_t n = xv.shape[0]
    cdef Py_ssize_t i, j
    cdef double ai, bi, si
    if x0.shape[0] != n or ev.shape[0] != m or ev.shape[1] != n:
        raise ValueError("posterior_chain: inconsistent shapes")
    with nogil:
        for i in range(m):
            ai = av[i]
            bi = bv[i]
            si = sv[i]
            for j in range(n):
                xv[j] = ai * x0[j] + bi * xv[j] + si * ev[i, j]
    return out
