"""Numpy im2col convolution with the same interface as the compiled kernel."""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _pad(a: np.ndarray, p: int) -> np.ndarray:
    if p == 0:
        return a
    return np.pad(a, ((0, 0), (0, 0), (p, p), (p, p)))


def _cols(x: np.ndarray, k: int, stride: int, pad: int, Ho: int, Wo: int) -> np.ndarray:
    """(N, C*k*k, Ho*Wo) column matrices."""
    N, C = x.shape[:2]
    xp = _pad(x, pad)
    win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :Ho, :Wo]
    return win.transpose(0, 1, 4, 5, 2, 3).reshape(N, C * k * k, Ho * Wo)


def conv_forward(x, w, b, stride: int, pad: int) -> np.ndarray:
    N, C, H, W = x.shape
    O, _, k, _ = w.shape
    Ho = (H + 2 * pad - k) // stride + 1
    Wo = (W + 2 * pad - k) // stride + 1
    out = np.matmul(w.reshape(O, -1), _cols(x, k, stride, pad, Ho, Wo))
    out += b[None, :, None]
    return out.reshape(N, O, Ho, Wo)


def conv_backward(x, w, g, stride: int, pad: int, need_x: bool, need_w: bool):
    N, C, H, W = x.shape
    O, _, k, _ = w.shape
    Ho, Wo = g.shape[2:]
    g3 = np.ascontiguousarray(g).reshape(N, O, Ho * Wo)
    gx = gw = None
    if need_w:
        cols = _cols(x, k, stride, pad, Ho, Wo)
        gw = np.einsum("nop,nqp->oq", g3, cols, optimize=True).reshape(w.shape)
    if need_x:
        dcols = np.matmul(w.reshape(O, -1).T, g3).reshape(N, C, k, k, Ho, Wo)
        gxp = np.zeros((N, C, H + 2 * pad, W + 2 * pad), dtype=x.dtype)
        hs, ws = stride * (Ho - 1) + 1, stride * (Wo - 1) + 1
        for i in range(k):
            for j in range(k):
                gxp[:, :, i:i + hs:stride, j:j + ws:stride] += dcols[:, :, i, j]
        gx = gxp[:, :, pad:pad + H, pad:pad + W] if pad else gxp
    return gx, gw
