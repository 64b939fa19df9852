"""Differentiable ops.  Every backward closure returns one gradient per parent
(``None`` where a parent needs none)."""
from __future__ import annotations

import numpy as np
import scipy.fft

from .. import _kernels
from .tensor import Tensor, as_tensor, make_result

# Kernels at least this large with unit stride go through the FFT path.
FFT_KERNEL_MIN = 8


def _needs(t: Tensor) -> bool:
    return t.requires_grad or t._backward is not None


def add(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        return make_result(a.data + b, (a,), lambda g: (g,))
    if a.shape != b.shape:
        raise ValueError(f"add: shape mismatch {a.shape} vs {b.shape}")
    return make_result(a.data + b.data, (a, b), lambda g: (g, g))


def mul(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        return make_result(a.data * b, (a,), lambda g: (g * b,))
    if a.shape != b.shape:
        raise ValueError(f"mul: shape mismatch {a.shape} vs {b.shape}")
    return make_result(a.data * b.data, (a, b),
                       lambda g: (g * b.data if _needs(a) else None,
                                  g * a.data if _needs(b) else None))


def sum(x: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    return make_result(np.sum(x.data), (x,), lambda g: (np.broadcast_to(g, x.shape),))


def mean(x: Tensor) -> Tensor:
    n = x.data.size
    return make_result(np.mean(x.data), (x,), lambda g: (np.broadcast_to(g / n, x.shape),))


def take(x: Tensor, idx) -> Tensor:
    """Row selection along the first axis."""
    idx = np.asarray(idx) if not isinstance(idx, slice) else idx

    def backward(g):
        full = np.zeros_like(x.data)
        if isinstance(idx, slice):
            full[idx] = g
        else:
            np.add.at(full, idx, g)
        return (full,)

    return make_result(x.data[idx], (x,), backward)


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0)
    return make_result(out, (x,), lambda g: (g * (out > 0),))


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """``x @ w.T + b`` for a batch ``x`` of shape (N, in)."""
    out = x.data @ w.data.T
    if b is not None:
        out = out + b.data

    def backward(g):
        gx = g @ w.data if _needs(x) else None
        gw = g.T @ x.data if _needs(w) else None
        gb = g.sum(axis=0) if b is not None and _needs(b) else None
        return (gx, gw, gb) if b is not None else (gx, gw)

    parents = (x, w, b) if b is not None else (x, w)
    return make_result(out, parents, backward)


def global_avg_pool(x: Tensor) -> Tensor:
    """(N, C, H, W) -> (N, C) channel means."""
    hw = x.shape[2] * x.shape[3]
    return make_result(x.data.mean(axis=(2, 3)), (x,),
                       lambda g: (np.broadcast_to((g / hw)[:, :, None, None], x.shape),))


def log_softmax(x: Tensor) -> Tensor:
    z = x.data - x.data.max(axis=1, keepdims=True)
    out = z - np.log(np.exp(z).sum(axis=1, keepdims=True))

    def backward(g):
        return (g - np.exp(out) * g.sum(axis=1, keepdims=True),)

    return make_result(out, (x,), backward)


def softmax(x: Tensor) -> Tensor:
    z = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)

    def backward(g):
        return (p * (g - (g * p).sum(axis=1, keepdims=True)),)

    return make_result(p, (x,), backward)


def cross_entropy(logits: Tensor, targets) -> Tensor:
    """Mean negative log-likelihood of integer ``targets`` under softmax(logits)."""
    targets = np.asarray(targets, dtype=np.int64)
    n = logits.shape[0]
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = -logp[np.arange(n), targets].mean()

    def backward(g):
        p = np.exp(logp)
        p[np.arange(n), targets] -= 1.0
        return (p * (g / n),)

    return make_result(np.asarray(loss, dtype=logits.dtype), (logits,), backward)


def contrastive_loss(h1: Tensor, h2: Tensor, s, margin: float = 1.0) -> Tensor:
    """Mean of ``(1-s) d^2 + s max(margin - d, 0)^2`` with ``d = ||h1 - h2||``.

    ``s`` is 0 for similar pairs and 1 for dissimilar ones.
    """
    s = np.asarray(s, dtype=h1.dtype).reshape(-1)
    diff = h1.data - h2.data
    d = np.sqrt((diff ** 2).sum(axis=1))
    hinge = np.maximum(margin - d, 0.0)
    per = (1 - s) * d ** 2 + s * hinge ** 2
    n = len(per)

    def backward(g):
        safe = np.where(d > 0, d, 1.0)
        # d(d^2)/dh1 = 2 diff ; d(hinge^2)/dh1 = -2 hinge diff / d
        coef = 2 * (1 - s) - 2 * s * np.where(d > 0, hinge / safe, 0.0)
        gh = (g / n) * coef[:, None] * diff
        return (gh if _needs(h1) else None, -gh if _needs(h2) else None)

    return make_result(np.asarray(per.mean(), dtype=h1.dtype), (h1, h2), backward)


# --- convolution -----------------------------------------------------------

def conv_output_size(size: int, k: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - k) // stride + 1


def conv2d(x: Tensor, w: Tensor, b: Tensor | None, stride: int = 1,
           padding: int = 0) -> Tensor:
    """Cross-correlation of (N, C, H, W) input with (O, C, k, k) weights."""
    if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[1]:
        raise ValueError(f"conv2d: incompatible input {x.shape} and weight {w.shape}")
    k = w.shape[2]
    if x.shape[2] + 2 * padding < k or x.shape[3] + 2 * padding < k:
        raise ValueError(f"conv2d: input {x.shape} smaller than kernel {k}")
    if stride == 1 and k >= FFT_KERNEL_MIN:
        return _conv2d_fft(x, w, b, padding)
    return _conv2d_im2col(x, w, b, stride, padding)


def _pad(a: np.ndarray, p: int) -> np.ndarray:
    if p == 0:
        return a
    return np.pad(a, ((0, 0), (0, 0), (p, p), (p, p)))


def _conv2d_im2col(x, w, b, stride, padding):
    kern = _kernels.conv
    xd = np.ascontiguousarray(x.data)
    wd = np.ascontiguousarray(w.data, dtype=xd.dtype)
    bias = np.zeros(w.shape[0], dtype=xd.dtype) if b is None else \
        np.ascontiguousarray(b.data, dtype=xd.dtype)
    out = kern.conv_forward(xd, wd, bias, stride, padding)

    def backward(g):
        g = np.ascontiguousarray(g, dtype=xd.dtype)
        gx, gw = kern.conv_backward(xd, wd, g, stride, padding, _needs(x), _needs(w))
        gb = g.sum(axis=(0, 2, 3)) if b is not None and _needs(b) else None
        return (gx, gw, gb) if b is not None else (gx, gw)

    parents = (x, w, b) if b is not None else (x, w)
    return make_result(out, parents, backward)


def _conv2d_fft(x, w, b, padding):
    N, C, H, W = x.shape
    O, _, k, _ = w.shape
    xp = _pad(x.data, padding)
    shape = xp.shape[2:]
    X = scipy.fft.rfft2(xp, s=shape)  # (N, C, Hp, Wp//2+1)
    Wf = scipy.fft.rfft2(w.data[:, :, ::-1, ::-1], s=shape)  # flipped kernel
    Y = np.einsum("nchw,ochw->nohw", X, Wf, optimize=True)
    out = scipy.fft.irfft2(Y, s=shape)[:, :, k - 1:, k - 1:].astype(x.dtype, copy=False)
    if b is not None:
        out += b.data[None, :, None, None]

    def backward(g):
        G = scipy.fft.rfft2(g, s=shape)
        gw = gx = gb = None
        if _needs(w):
            # correlation of the input with the output gradient
            cc = scipy.fft.irfft2(np.einsum("nohw,nchw->ochw", np.conj(G), X, optimize=True),
                                  s=shape)
            gw = cc[:, :, :k, :k].astype(w.dtype, copy=False)
        if b is not None and _needs(b):
            gb = g.sum(axis=(0, 2, 3))
        if _needs(x):
            Wk = scipy.fft.rfft2(w.data, s=shape)
            full = scipy.fft.irfft2(np.einsum("nohw,ochw->nchw", G, Wk, optimize=True), s=shape)
            full = full.astype(x.dtype, copy=False)
            gx = full[:, :, padding:padding + H, padding:padding + W] if padding else full
        return (gx, gw, gb) if b is not None else (gx, gw)

    parents = (x, w, b) if b is not None else (x, w)
    return make_result(np.ascontiguousarray(out), parents, backward)


def sum_product(a: Tensor, b: Tensor) -> Tensor:
    """``sum(a * b)``; handy for gradient tests."""
    return sum(mul(a, as_tensor(b) if not isinstance(b, Tensor) else b))
