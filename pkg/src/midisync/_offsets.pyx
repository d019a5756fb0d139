# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled boundary-offset kernel.

Same contract as :mod:`midisync._offsets_py` (see that module for the
model description); this version is a single linear sweep that tracks
the earliest still-pending boundary with a moving front pointer, so it
runs in O(tokens + boundaries) with no large temporaries.
"""

import numpy as np

BACKEND_NAME = "compiled"


def compute_offsets(cursor_ms, is_chord, bounds_ms, long long xi_ms, long long dmax_ms):
    cursor = np.ascontiguousarray(cursor_ms, dtype=np.int64)
    flags = np.ascontiguousarray(is_chord, dtype=np.uint8)
    bounds = np.ascontiguousarray(bounds_ms, dtype=np.int64)
    out = np.empty(cursor.shape[0], dtype=np.float64)
    dead = np.zeros(bounds.shape[0], dtype=np.uint8)
    if cursor.shape[0]:
        _sweep(cursor, flags, bounds, dead, xi_ms, dmax_ms, out)
    return out


cdef void _sweep(
    const long long[::1] cursor,
    const unsigned char[::1] flags,
    const long long[::1] bounds,
    unsigned char[::1] dead,
    long long xi_ms,
    long long dmax_ms,
    double[::1] out,
) noexcept nogil:
    cdef Py_ssize_t n = cursor.shape[0]
    cdef Py_ssize_t m = bounds.shape[0]
    cdef Py_ssize_t i, j, first = 0
    cdef long long c, d

    for i in range(n):
        c = cursor[i]
        if flags[i]:
            j = first
            while j < m and bounds[j] < c + xi_ms:
                if bounds[j] > c - xi_ms:
                    dead[j] = 1
                j += 1
        j = first
        while j < m and bounds[j] < c - xi_ms:
            dead[j] = 1
            j += 1
        while first < m and dead[first]:
            first += 1
        if first < m:
            d = bounds[first] - c
            if d < 0:
                d = 0
            elif d > dmax_ms:
                d = dmax_ms
        else:
            d = dmax_ms
        out[i] = d / 1000.0
