# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled kernels over 128-bit addresses stored as (hi, lo) uint64 pairs.

Same API and results as ``_pycore``.
"""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t

cnp.import_array()

BACKEND = "cython"

cdef uint64_t M64 = 0xFFFFFFFFFFFFFFFF


cdef tuple _split_sorted(object addrs):
    """Unique addresses as sorted hi/lo arrays."""
    cdef list items = list(set(addrs))
    cdef Py_ssize_t n = len(items), i
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] hi = np.empty(n, dtype=np.uint64)
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] lo = np.empty(n, dtype=np.uint64)
    cdef object a
    for i in range(n):
        a = items[i]
        hi[i] = <uint64_t>(a >> 64)
        lo[i] = <uint64_t>(a & M64)
    order = np.lexsort((lo, hi))
    return np.ascontiguousarray(hi[order]), np.ascontiguousarray(lo[order])


cdef inline bint _gap_le(uint64_t h0, uint64_t l0, uint64_t h1, uint64_t l1, uint64_t g):
    # (h1, l1) >= (h0, l0); true when the difference is <= g
    if h1 == h0:
        return l1 - l0 <= g
    if h1 == h0 + 1 and l1 < l0:
        return (M64 - l0) + l1 + 1 <= g
    return False


cdef inline object _join(uint64_t h, uint64_t l):
    return (<object>h << 64) | <object>l


def cluster_runs(addrs, Py_ssize_t min_size, max_gap):
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] hi
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] lo
    hi, lo = _split_sorted(addrs)
    cdef Py_ssize_t n = hi.shape[0], i, j, start = 0
    cdef uint64_t g = <uint64_t>min(max_gap, M64)
    cdef list out = []
    cdef list run
    for i in range(1, n + 1):
        if i == n or not _gap_le(hi[i - 1], lo[i - 1], hi[i], lo[i], g):
            if i - start >= min_size:
                run = [None] * (i - start)
                for j in range(start, i):
                    run[j - start] = _join(hi[j], lo[j])
                out.append(run)
            start = i
    return out


def dense_prefixes(addrs, lengths, Py_ssize_t threshold):
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] hi
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] lo
    hi, lo = _split_sorted(addrs)
    cdef Py_ssize_t n = hi.shape[0], i, start
    cdef uint64_t mh, ml, kh, kl, ch, cl
    cdef int length
    cdef dict out = {}
    cdef list bases
    for length in lengths:
        if length <= 0:
            mh = 0
            ml = 0
        elif length <= 64:
            mh = M64 << (64 - length) if length < 64 else M64
            ml = 0
        else:
            mh = M64
            ml = M64 << (128 - length) if length < 128 else M64
        bases = []
        start = 0
        if n:
            kh = hi[0] & mh
            kl = lo[0] & ml
        for i in range(1, n + 1):
            if i < n:
                ch = hi[i] & mh
                cl = lo[i] & ml
                if ch == kh and cl == kl:
                    continue
            if i - start >= threshold:
                bases.append(_join(kh, kl))
            if i < n:
                kh = ch
                kl = cl
                start = i
        out[length] = bases
    return out
