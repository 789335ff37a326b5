# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled implementations of the hot kernels (see _fallback for contracts)."""

import numpy as np

cimport numpy as cnp
from libc.math cimport atan2, cos, sin, sqrt

cnp.import_array()


def eigen_split_batch(eps):
    eps = np.ascontiguousarray(eps, dtype=np.float64)
    cdef double[:, ::1] e = eps
    cdef Py_ssize_t n = e.shape[0]
    plus_arr = np.empty((n, 3), dtype=np.float64)
    minus_arr = np.empty((n, 3), dtype=np.float64)
    cdef double[:, ::1] plus = plus_arr
    cdef double[:, ::1] minus = minus_arr
    cdef Py_ssize_t i
    cdef double exx, eyy, exy, half_tr, delta, lam1, lam2, p1, p2, theta, c, s
    for i in range(n):
        exx = e[i, 0]
        eyy = e[i, 1]
        exy = 0.5 * e[i, 2]
        half_tr = 0.5 * (exx + eyy)
        delta = sqrt(0.25 * (exx - eyy) * (exx - eyy) + exy * exy)
        lam1 = half_tr + delta
        lam2 = half_tr - delta
        theta = 0.5 * atan2(2.0 * exy, exx - eyy)
        c = cos(theta)
        s = sin(theta)
        p1 = lam1 if lam1 > 0.0 else 0.0
        p2 = lam2 if lam2 > 0.0 else 0.0
        plus[i, 0] = p1 * c * c + p2 * s * s
        plus[i, 1] = p1 * s * s + p2 * c * c
        plus[i, 2] = 2.0 * (p1 - p2) * c * s
        minus[i, 0] = e[i, 0] - plus[i, 0]
        minus[i, 1] = e[i, 1] - plus[i, 1]
        minus[i, 2] = e[i, 2] - plus[i, 2]
    return plus_arr, minus_arr


def elem_stiffness_batch(b_mats, d_mats, areas):
    b_mats = np.ascontiguousarray(b_mats, dtype=np.float64)
    d_mats = np.ascontiguousarray(d_mats, dtype=np.float64)
    areas = np.ascontiguousarray(areas, dtype=np.float64)
    cdef double[:, :, ::1] b = b_mats
    cdef double[:, :, ::1] d = d_mats
    cdef double[::1] a = areas
    cdef Py_ssize_t n = b.shape[0]
    ke_arr = np.zeros((n, 6, 6), dtype=np.float64)
    cdef double[:, :, ::1] ke = ke_arr
    cdef Py_ssize_t e, i, j, k, l
    cdef double db[3][6]
    cdef double acc
    for e in range(n):
        for k in range(3):
            for j in range(6):
                acc = 0.0
                for l in range(3):
                    acc += d[e, k, l] * b[e, l, j]
                db[k][j] = acc
        for i in range(6):
            for j in range(6):
                acc = 0.0
                for k in range(3):
                    acc += b[e, k, i] * db[k][j]
                ke[e, i, j] = acc * a[e]
    return ke_arr


cdef inline void _heap_push(double[::1] hval, long long[::1] hidx, Py_ssize_t* size,
                            double val, long long idx) noexcept nogil:
    cdef Py_ssize_t pos = size[0]
    cdef Py_ssize_t parent
    hval[pos] = val
    hidx[pos] = idx
    size[0] += 1
    while pos > 0:
        parent = (pos - 1) >> 1
        if hval[parent] < hval[pos]:
            hval[parent], hval[pos] = hval[pos], hval[parent]
            hidx[parent], hidx[pos] = hidx[pos], hidx[parent]
            pos = parent
        else:
            break


cdef inline void _heap_pop(double[::1] hval, long long[::1] hidx, Py_ssize_t* size,
                           double* val, long long* idx) noexcept nogil:
    cdef Py_ssize_t pos = 0
    cdef Py_ssize_t child
    val[0] = hval[0]
    idx[0] = hidx[0]
    size[0] -= 1
    hval[0] = hval[size[0]]
    hidx[0] = hidx[size[0]]
    while True:
        child = 2 * pos + 1
        if child >= size[0]:
            break
        if child + 1 < size[0] and hval[child + 1] > hval[child]:
            child += 1
        if hval[child] > hval[pos]:
            hval[child], hval[pos] = hval[pos], hval[child]
            hidx[child], hidx[pos] = hidx[pos], hidx[child]
            pos = child
        else:
            break


def bounds_sweep(indptr, indices, lengths, d_star, double slope, int side):
    if side != 1 and side != -1:
        raise ValueError("side must be +1 (upper) or -1 (lower)")
    indptr = np.ascontiguousarray(indptr, dtype=np.int64)
    indices = np.ascontiguousarray(indices, dtype=np.int64)
    lengths = np.ascontiguousarray(lengths, dtype=np.float64)
    d_star = np.ascontiguousarray(d_star, dtype=np.float64)
    cdef long long[::1] ip = indptr
    cdef long long[::1] ix = indices
    cdef double[::1] ln = lengths
    cdef Py_ssize_t n = d_star.shape[0]
    cdef double sgn = <double> side
    out_arr = sgn * d_star
    cdef double[::1] out = out_arr

    cdef Py_ssize_t cap = 4 * n + 16
    hval_arr = np.empty(cap, dtype=np.float64)
    hidx_arr = np.empty(cap, dtype=np.int64)
    cdef double[::1] hval = hval_arr
    cdef long long[::1] hidx = hidx_arr
    cdef Py_ssize_t size = 0
    cdef Py_ssize_t i, k
    cdef long long v, w
    cdef double val, cand

    for i in range(n):
        _heap_push(hval, hidx, &size, out[i], i)
    while size > 0:
        _heap_pop(hval, hidx, &size, &val, &v)
        if val < out[v] - 1e-15:
            continue
        for k in range(ip[v], ip[v + 1]):
            w = ix[k]
            cand = val - slope * ln[k]
            if cand > out[w]:
                out[w] = cand
                if size >= cap:
                    cap = 2 * cap
                    hval_arr = np.resize(hval_arr, cap)
                    hidx_arr = np.resize(hidx_arr, cap)
                    hval = hval_arr
                    hidx = hidx_arr
                _heap_push(hval, hidx, &size, cand, w)
    return sgn * out_arr
