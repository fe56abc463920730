# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled 2-D Pareto kernels (see ``_core_py`` for the reference versions)."""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()


def staircase_boxes(double[:, :, ::1] Y, double[::1] ref):
    """Pareto filter + box decomposition of each sample's point set.

    ``Y`` is ``(S, n, 2)`` (minimization).  Returns ``lo, hi`` of shape
    ``(S, n + 1, 2)`` and the box count per sample.
    """
    cdef Py_ssize_t S = Y.shape[0], n = Y.shape[1]
    cdef cnp.intp_t[:, ::1] order = np.ascontiguousarray(np.argsort(np.asarray(Y)[..., 0], axis=1, kind="stable"), dtype=np.intp)
    lo_arr = np.empty((S, n + 1, 2))
    hi_arr = np.empty((S, n + 1, 2))
    nbox_arr = np.empty(S, dtype=np.intp)
    cdef double[:, :, ::1] lo = lo_arr
    cdef double[:, :, ::1] hi = hi_arr
    cdef cnp.intp_t[::1] nbox = nbox_arr
    cdef double[::1] fx = np.empty(n + 1)
    cdef double[::1] fy = np.empty(n + 1)
    cdef double rx = ref[0], ry = ref[1], x, y, cur
    cdef Py_ssize_t s, j, k, b
    for s in range(S):
        k = 0
        cur = ry
        for j in range(n):
            x = Y[s, order[s, j], 0]
            y = Y[s, order[s, j], 1]
            if not (x < rx and y < ry):
                continue
            if y < cur:
                if k > 0 and x == fx[k - 1]:
                    fy[k - 1] = y
                else:
                    fx[k] = x
                    fy[k] = y
                    k += 1
                cur = y
        if k == 0:
            lo[s, 0, 0] = -INFINITY
            lo[s, 0, 1] = -INFINITY
            hi[s, 0, 0] = rx
            hi[s, 0, 1] = ry
            nbox[s] = 1
            continue
        lo[s, 0, 0] = -INFINITY
        lo[s, 0, 1] = -INFINITY
        hi[s, 0, 0] = fx[0]
        hi[s, 0, 1] = ry
        for b in range(1, k + 1):
            lo[s, b, 0] = fx[b - 1]
            lo[s, b, 1] = -INFINITY
            hi[s, b, 0] = fx[b] if b < k else rx
            hi[s, b, 1] = fy[b - 1]
        nbox[s] = k + 1
    return lo_arr, hi_arr, nbox_arr


def hvi_sum(double[:, :, ::1] lo, double[:, :, ::1] hi, cnp.intp_t[::1] nbox, double[:, :, ::1] Yc):
    """Sum over samples of each candidate's hypervolume improvement.

    ``Yc`` is ``(S, C, 2)``: candidate ``c``'s outcome under sample ``s``.
    Boxes must come from ``staircase_boxes``: upper x strictly increases and
    upper y decreases along a sample's boxes, so the boxes a candidate
    overlaps form one run, located by bisection.
    """
    cdef Py_ssize_t S = Yc.shape[0], C = Yc.shape[1], s, c, b, a, z, m, nb
    out_arr = np.zeros(C)
    cdef double[::1] out = out_arr
    cdef double yx, yy, wx, wy, acc, l
    with nogil:
        for s in range(S):
            nb = nbox[s]
            for c in range(C):
                yx = Yc[s, c, 0]
                yy = Yc[s, c, 1]
                # first box whose upper x exceeds yx
                a = 0
                z = nb
                while a < z:
                    m = (a + z) >> 1
                    if hi[s, m, 0] > yx:
                        z = m
                    else:
                        a = m + 1
                acc = 0.0
                for b in range(a, nb):
                    l = lo[s, b, 1]
                    wy = hi[s, b, 1] - (l if l > yy else yy)
                    if wy <= 0.0:
                        break
                    l = lo[s, b, 0]
                    wx = hi[s, b, 0] - (l if l > yx else yx)
                    if wx > 0.0:
                        acc += wx * wy
                out[c] += acc
    return out_arr


def hypervolume_batch(double[:, :, ::1] Y, double[::1] ref):
    """Exact 2-D hypervolume of each sample's point set."""
    cdef Py_ssize_t S = Y.shape[0], n = Y.shape[1], s, j
    cdef cnp.intp_t[:, ::1] order = np.ascontiguousarray(np.argsort(np.asarray(Y)[..., 0], axis=1, kind="stable"), dtype=np.intp)
    out_arr = np.zeros(S)
    cdef double[::1] out = out_arr
    cdef double rx = ref[0], ry = ref[1], x, y, cur, acc
    for s in range(S):
        cur = ry
        acc = 0.0
        for j in range(n):
            x = Y[s, order[s, j], 0]
            y = Y[s, order[s, j], 1]
            if x < rx and y < cur:
                acc += (rx - x) * (cur - y)
                cur = y
        out[s] = acc
    return out_arr
