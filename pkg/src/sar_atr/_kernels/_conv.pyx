# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled 2-D convolution: per-sample im2col into a cache-sized buffer
followed by a BLAS gemm.  Weights are (O, C, k, k), images (N, C, H, W);
both float32 or both float64, C-contiguous.
"""
import numpy as np

from libc.string cimport memset
from scipy.linalg.cython_blas cimport dgemm, sgemm

ctypedef fused real:
    float
    double


cdef void _gemm(bint ta, bint tb, int M, int N, int K, real* A, int lda, real* B, int ldb,
                real beta, real* C, int ldc) noexcept nogil:
    """Row-major ``C = op(A) op(B) + beta C`` through column-major BLAS."""
    cdef char ca = b'T' if ta else b'N'
    cdef char cb = b'T' if tb else b'N'
    cdef real alpha = 1
    if real is float:
        sgemm(&cb, &ca, &N, &M, &K, &alpha, B, &ldb, A, &lda, &beta, C, &ldc)
    else:
        dgemm(&cb, &ca, &N, &M, &K, &alpha, B, &ldb, A, &lda, &beta, C, &ldc)


cdef void _im2col(const real* x, int C, int H, int W, int k, int s, int p,
                  int Ho, int Wo, real* cols) noexcept nogil:
    cdef int c, ki, kj, oi, oj, ii, jj
    cdef Py_ssize_t P = <Py_ssize_t> Ho * Wo
    cdef real* row
    cdef const real* src
    for c in range(C):
        for ki in range(k):
            for kj in range(k):
                row = cols + ((c * k + ki) * k + kj) * P
                for oi in range(Ho):
                    ii = oi * s - p + ki
                    if ii < 0 or ii >= H:
                        memset(row + oi * Wo, 0, Wo * sizeof(real))
                        continue
                    src = x + (<Py_ssize_t> c * H + ii) * W
                    for oj in range(Wo):
                        jj = oj * s - p + kj
                        if jj < 0 or jj >= W:
                            row[oi * Wo + oj] = 0
                        else:
                            row[oi * Wo + oj] = src[jj]


cdef void _col2im(const real* cols, int C, int H, int W, int k, int s, int p,
                  int Ho, int Wo, real* x) noexcept nogil:
    """Scatter-add the inverse of :func:`_im2col` into ``x``."""
    cdef int c, ki, kj, oi, oj, ii, jj
    cdef Py_ssize_t P = <Py_ssize_t> Ho * Wo
    cdef const real* row
    cdef real* dst
    for c in range(C):
        for ki in range(k):
            for kj in range(k):
                row = cols + ((c * k + ki) * k + kj) * P
                for oi in range(Ho):
                    ii = oi * s - p + ki
                    if ii < 0 or ii >= H:
                        continue
                    dst = x + (<Py_ssize_t> c * H + ii) * W
                    for oj in range(Wo):
                        jj = oj * s - p + kj
                        if 0 <= jj < W:
                            dst[jj] += row[oi * Wo + oj]


def conv_forward(const real[:, :, :, ::1] x, const real[:, :, :, ::1] w,
                 const real[::1] b, int stride, int pad):
    """Cross-correlation plus bias; returns (N, O, Ho, Wo)."""
    cdef int N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef int O = w.shape[0], k = w.shape[2]
    cdef int Ho = (H + 2 * pad - k) // stride + 1
    cdef int Wo = (W + 2 * pad - k) // stride + 1
    cdef int P = Ho * Wo, Q = C * k * k
    dtype = np.float32 if real is float else np.float64
    out = np.empty((N, O, Ho, Wo), dtype=dtype)
    cols = np.empty((Q, P), dtype=dtype)
    cdef real[:, :, :, ::1] ov = out
    cdef real[:, ::1] cv = cols
    cdef int n, o, q
    cdef real bias
    cdef real* dst
    with nogil:
        for n in range(N):
            _im2col(&x[n, 0, 0, 0], C, H, W, k, stride, pad, Ho, Wo, &cv[0, 0])
            _gemm(False, False, O, P, Q, <real*> &w[0, 0, 0, 0], Q, &cv[0, 0], P,
                  0, &ov[n, 0, 0, 0], P)
            for o in range(O):
                bias = b[o]
                dst = &ov[n, o, 0, 0]
                for q in range(P):
                    dst[q] += bias
    return out


def conv_backward(const real[:, :, :, ::1] x, const real[:, :, :, ::1] w,
                  const real[:, :, :, ::1] g, int stride, int pad,
                  bint need_x, bint need_w):
    """Gradients (gx, gw) of a convolution given the output gradient ``g``.

    Either entry is None when not requested.  The bias gradient is the sum
    of ``g`` over (N, H, W) and is left to the caller.
    """
    cdef int N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef int O = w.shape[0], k = w.shape[2]
    cdef int Ho = g.shape[2], Wo = g.shape[3]
    cdef int P = Ho * Wo, Q = C * k * k
    dtype = np.float32 if real is float else np.float64
    cols = np.empty((Q, P), dtype=dtype)
    cdef real[:, ::1] cv = cols
    gx = np.zeros((N, C, H, W), dtype=dtype) if need_x else None
    gw = np.zeros((O, C, k, k), dtype=dtype) if need_w else None
    cdef real[:, :, :, ::1] gxv
    cdef real[:, :, :, ::1] gwv
    if need_x:
        gxv = gx
    if need_w:
        gwv = gw
    cdef int n
    with nogil:
        for n in range(N):
            if need_w:
                _im2col(&x[n, 0, 0, 0], C, H, W, k, stride, pad, Ho, Wo, &cv[0, 0])
                _gemm(False, True, O, Q, P, <real*> &g[n, 0, 0, 0], P, &cv[0, 0], P,
                      1, &gwv[0, 0, 0, 0], Q)
            if need_x:
                _gemm(True, False, Q, P, O, <real*> &w[0, 0, 0, 0], Q,
                      <real*> &g[n, 0, 0, 0], P, 0, &cv[0, 0], P)
                _col2im(&cv[0, 0], C, H, W, k, stride, pad, Ho, Wo, &gxv[n, 0, 0, 0])
    return gx, gw
