# cython: boundscheck=False, wraparound=False, cdivision=True, nonecheck=False
"""Compiled sampling/convolution kernels (hot loops of the generator)."""

import numpy as np

cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()

MODE_ZERO = 0
MODE_CLAMP = 1


def sample_trilinear(const double[:, :, ::1] vol, const double[::1] ci,
                     const double[::1] cj, const double[::1] ck, int mode=0):
    cdef Py_ssize_t n = ci.shape[0]
    cdef Py_ssize_t d0 = vol.shape[0], d1 = vol.shape[1], d2 = vol.shape[2]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t p, i0, j0, k0, i1, j1, k1
    cdef double x, y, z, fi, fj, fk, gi, gj, gk
    cdef double c000, c001, c010, c011, c100, c101, c110, c111

    with nogil:
        for p in range(n):
            x = ci[p]
            y = cj[p]
            z = ck[p]
            if mode == 1:
                if x < 0.0:
                    x = 0.0
                elif x > d0 - 1.0:
                    x = d0 - 1.0
                if y < 0.0:
                    y = 0.0
                elif y > d1 - 1.0:
                    y = d1 - 1.0
                if z < 0.0:
                    z = 0.0
                elif z > d2 - 1.0:
                    z = d2 - 1.0
            i0 = <Py_ssize_t>floor(x)
            j0 = <Py_ssize_t>floor(y)
            k0 = <Py_ssize_t>floor(z)
            fi = x - i0
            fj = y - j0
            fk = z - k0
            i1 = i0 + 1
            j1 = j0 + 1
            k1 = k0 + 1
            c000 = vol[i0, j0, k0] if 0 <= i0 < d0 and 0 <= j0 < d1 and 0 <= k0 < d2 else 0.0
            c001 = vol[i0, j0, k1] if 0 <= i0 < d0 and 0 <= j0 < d1 and 0 <= k1 < d2 else 0.0
            c010 = vol[i0, j1, k0] if 0 <= i0 < d0 and 0 <= j1 < d1 and 0 <= k0 < d2 else 0.0
            c011 = vol[i0, j1, k1] if 0 <= i0 < d0 and 0 <= j1 < d1 and 0 <= k1 < d2 else 0.0
            c100 = vol[i1, j0, k0] if 0 <= i1 < d0 and 0 <= j0 < d1 and 0 <= k0 < d2 else 0.0
            c101 = vol[i1, j0, k1] if 0 <= i1 < d0 and 0 <= j0 < d1 and 0 <= k1 < d2 else 0.0
            c110 = vol[i1, j1, k0] if 0 <= i1 < d0 and 0 <= j1 < d1 and 0 <= k0 < d2 else 0.0
            c111 = vol[i1, j1, k1] if 0 <= i1 < d0 and 0 <= j1 < d1 and 0 <= k1 < d2 else 0.0
            gi = 1.0 - fi
            gj = 1.0 - fj
            gk = 1.0 - fk
            out[p] = (gi * (gj * (gk * c000 + fk * c001)
                            + fj * (gk * c010 + fk * c011))
                      + fi * (gj * (gk * c100 + fk * c101)
                              + fj * (gk * c110 + fk * c111)))
    return out_arr


def sample_nearest(const double[:, :, ::1] vol, const double[::1] ci,
                   const double[::1] cj, const double[::1] ck, int mode=0):
    cdef Py_ssize_t n = ci.shape[0]
    cdef Py_ssize_t d0 = vol.shape[0], d1 = vol.shape[1], d2 = vol.shape[2]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t p, ii, jj, kk

    with nogil:
        for p in range(n):
            ii = <Py_ssize_t>floor(ci[p] + 0.5)
            jj = <Py_ssize_t>floor(cj[p] + 0.5)
            kk = <Py_ssize_t>floor(ck[p] + 0.5)
            if mode == 1:
                if ii < 0:
                    ii = 0
                elif ii >= d0:
                    ii = d0 - 1
                if jj < 0:
                    jj = 0
                elif jj >= d1:
                    jj = d1 - 1
                if kk < 0:
                    kk = 0
                elif kk >= d2:
                    kk = d2 - 1
                out[p] = vol[ii, jj, kk]
            else:
                if 0 <= ii < d0 and 0 <= jj < d1 and 0 <= kk < d2:
                    out[p] = vol[ii, jj, kk]
                else:
                    out[p] = 0.0
    return out_arr


def correlate1d(const double[:, :, ::1] vol, const double[::1] kernel, int axis):
    """Zero-padded correlation along one axis; kernel length must be odd."""
    cdef Py_ssize_t d0 = vol.shape[0], d1 = vol.shape[1], d2 = vol.shape[2]
    cdef Py_ssize_t klen = kernel.shape[0]
    cdef Py_ssize_t radius = (klen - 1) // 2
    out_arr = np.zeros((d0, d1, d2), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t i, j, k, t, s
    cdef double acc, w

    with nogil:
        if axis == 0:
            for i in range(d0):
                for t in range(klen):
                    s = i + t - radius
                    if s < 0 or s >= d0:
                        continue
                    w = kernel[t]
                    for j in range(d1):
                        for k in range(d2):
                            out[i, j, k] += w * vol[s, j, k]
        elif axis == 1:
            for i in range(d0):
                for j in range(d1):
                    for t in range(klen):
                        s = j + t - radius
                        if s < 0 or s >= d1:
                            continue
                        w = kernel[t]
                        for k in range(d2):
                            out[i, j, k] += w * vol[i, s, k]
        else:
            for i in range(d0):
                for j in range(d1):
                    for k in range(d2):
                        acc = 0.0
                        for t in range(klen):
                            s = k + t - radius
                            if 0 <= s < d2:
                                acc += kernel[t] * vol[i, j, s]
                        out[i, j, k] = acc
    return out_arr
