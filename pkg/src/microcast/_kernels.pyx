# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; see ``_pykernels`` for the reference semantics."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def haar_atrous(x, int levels):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] src = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t rows = src.shape[0], n = src.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=3] details = np.empty((levels, rows, n), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] prev = src.copy()
    cdef cnp.ndarray[cnp.float64_t, ndim=2] cur = np.empty((rows, n), dtype=np.float64)
    cdef double[:, ::1] pv
    cdef double[:, ::1] cv
    cdef double[:, :, ::1] dv = details
    cdef Py_ssize_t r, t, s
    cdef int j
    cdef double lag
    for j in range(levels):
        s = 1 << j
        pv = prev
        cv = cur
        for r in range(rows):
            for t in range(n):
                if t < s:
                    lag = pv[r, 0]
                else:
                    lag = pv[r, t - s]
                cv[r, t] = (pv[r, t] + lag) / 2.0
                dv[j, r, t] = pv[r, t] - cv[r, t]
        prev, cur = cur, prev
    return details, prev


def bin_mean(times, values, long long start, long long step, Py_ssize_t ncells):
    cdef long long[::1] tv = np.ascontiguousarray(times, dtype=np.int64)
    cdef double[::1] vv = np.ascontiguousarray(values, dtype=np.float64)
    sums_arr = np.zeros(ncells, dtype=np.float64)
    counts_arr = np.zeros(ncells, dtype=np.int64)
    cdef double[::1] sums = sums_arr
    cdef long long[::1] counts = counts_arr
    cdef Py_ssize_t i, m = tv.shape[0]
    cdef long long d, idx
    for i in range(m):
        d = tv[i] - start
        if d < 0:
            continue
        idx = d // step
        if idx >= ncells:
            continue
        sums[idx] += vv[i]
        counts[idx] += 1
    means_arr = np.zeros(ncells, dtype=np.float64)
    cdef double[::1] means = means_arr
    for i in range(ncells):
        if counts[i] > 0:
            means[i] = sums[i] / <double>counts[i]
    return means_arr, counts_arr


def fill_runs(values, valid, int max_gap):
    out_arr = np.array(values, dtype=np.float64, copy=True)
    ok_arr = np.array(valid, dtype=bool, copy=True)
    cdef double[::1] out = out_arr
    cdef cnp.npy_bool[::1] ok = ok_arr.view(np.bool_)
    cdef Py_ssize_t n = out.shape[0], i = 0, i0, k, left, right
    cdef double vl, vr
    if max_gap <= 0:
        return out_arr, ok_arr
    while i < n:
        if ok[i]:
            i += 1
            continue
        i0 = i
        while i < n and not ok[i]:
            i += 1
        if i0 == 0 or i == n or i - i0 > max_gap:
            continue
        left = i0 - 1
        right = i
        vl = out[left]
        vr = out[right]
        for k in range(i0, i):
            out[k] = vl + (vr - vl) * (<double>(k - left) / <double>(right - left))
            ok[k] = True
    return out_arr, ok_arr
