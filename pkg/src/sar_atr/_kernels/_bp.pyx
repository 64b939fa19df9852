# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled back-projection kernels.

Pixel (i, j) sits at ``origin + (i - n//2)*pitch*u_r + (j - n//2)*pitch*u_x``.
Range profiles are sampled at ``r_start[p] + m*dr`` and linearly interpolated.
Each image row is handled in two passes: geometry and carrier for the whole
row first (vectorizable), then the gather/scatter against the profile.
"""
import numpy as np

from libc.math cimport sqrt, floor, cos, sin, fmod, M_PI


cdef extern from "bp_core.h":
    void bp_row_geometry(Py_ssize_t n, double half_pitch_index, double pitch,
                         double bx, double by, double bz,
                         double ux, double uy, double uz,
                         double r0, double inv_dr, double ph0, double k_c,
                         double *t, double *cr, double *ci) noexcept nogil


cdef inline void _row_geometry(Py_ssize_t p, Py_ssize_t i, Py_ssize_t n,
                               const double[:, ::1] pos, const double[::1] origin,
                               const double[::1] u_r, const double[::1] u_x,
                               double pitch, double r0, double dr, double ph0,
                               double k_c, double* t, double* cr, double* ci) noexcept nogil:
    cdef Py_ssize_t half = n // 2
    cdef double a = (i - half) * pitch
    bp_row_geometry(n, <double> half, pitch,
                    origin[0] + a * u_r[0] - pos[p, 0],
                    origin[1] + a * u_r[1] - pos[p, 1],
                    origin[2] + a * u_r[2] - pos[p, 2],
                    u_x[0], u_x[1], u_x[2], r0, 1.0 / dr, ph0, k_c, t, cr, ci)


def bp_forward(const double complex[:, ::1] profiles, const double[::1] r_start,
               double dr, const double[:, ::1] pos, const double[::1] origin,
               const double[::1] u_r, const double[::1] u_x, double pitch,
               Py_ssize_t n, double k_c):
    cdef Py_ssize_t n_p = profiles.shape[0], m_len = profiles.shape[1]
    out = np.zeros((n, n), dtype=np.complex128)
    cdef double[:, ::1] img = out.view(np.float64)
    buf = np.empty((3, n), dtype=np.float64)
    cdef double[:, ::1] rowbuf = buf
    cdef const double[:, ::1] prof = np.asarray(profiles).view(np.float64)
    cdef Py_ssize_t p, i, j, i0
    cdef double w, ph0, vr, vi, c, s
    with nogil:
        for p in range(n_p):
            # reduced carrier phase at r_start keeps the sin/cos arguments small
            ph0 = fmod(k_c * r_start[p], 2.0 * M_PI)
            for i in range(n):
                _row_geometry(p, i, n, pos, origin, u_r, u_x, pitch, r_start[p], dr,
                              ph0, k_c, &rowbuf[0, 0], &rowbuf[1, 0], &rowbuf[2, 0])
                for j in range(n):
                    i0 = <Py_ssize_t> floor(rowbuf[0, j])
                    if i0 < 0 or i0 + 1 >= m_len:
                        continue
                    w = rowbuf[0, j] - i0
                    vr = (1.0 - w) * prof[p, 2 * i0] + w * prof[p, 2 * i0 + 2]
                    vi = (1.0 - w) * prof[p, 2 * i0 + 1] + w * prof[p, 2 * i0 + 3]
                    c = rowbuf[1, j]
                    s = rowbuf[2, j]
                    img[i, 2 * j] += vr * c - vi * s
                    img[i, 2 * j + 1] += vr * s + vi * c
    return out


def bp_adjoint(const double complex[:, ::1] grad, Py_ssize_t m_len,
               const double[::1] r_start, double dr, const double[:, ::1] pos,
               const double[::1] origin, const double[::1] u_r,
               const double[::1] u_x, double pitch, double k_c):
    cdef Py_ssize_t n = grad.shape[0], n_p = pos.shape[0]
    out = np.zeros((n_p, m_len), dtype=np.complex128)
    cdef double[:, ::1] dprof = out.view(np.float64)
    cdef const double[:, ::1] gr = np.asarray(grad).view(np.float64)
    buf = np.empty((3, n), dtype=np.float64)
    cdef double[:, ::1] rowbuf = buf
    cdef Py_ssize_t p, i, j, i0
    cdef double w, ph0, c, s, g_r, g_i
    with nogil:
        for p in range(n_p):
            ph0 = fmod(k_c * r_start[p], 2.0 * M_PI)
            for i in range(n):
                _row_geometry(p, i, n, pos, origin, u_r, u_x, pitch, r_start[p], dr,
                              ph0, k_c, &rowbuf[0, 0], &rowbuf[1, 0], &rowbuf[2, 0])
                for j in range(n):
                    i0 = <Py_ssize_t> floor(rowbuf[0, j])
                    if i0 < 0 or i0 + 1 >= m_len:
                        continue
                    w = rowbuf[0, j] - i0
                    c = rowbuf[1, j]
                    s = rowbuf[2, j]
                    # grad * conj(carrier)
                    g_r = gr[i, 2 * j] * c + gr[i, 2 * j + 1] * s
                    g_i = gr[i, 2 * j + 1] * c - gr[i, 2 * j] * s
                    dprof[p, 2 * i0] += (1.0 - w) * g_r
                    dprof[p, 2 * i0 + 1] += (1.0 - w) * g_i
                    dprof[p, 2 * i0 + 2] += w * g_r
                    dprof[p, 2 * i0 + 3] += w * g_i
    return out
