"""Pure-numpy back-projection kernels; same contract as the compiled ``_bp``."""
import numpy as np


def _pixel_ranges(pos_p, origin, u_r, u_x, pitch, n):
    offs = (np.arange(n) - n // 2) * pitch
    grid = (origin[None, None, :] + offs[:, None, None] * u_r[None, None, :]
            + offs[None, :, None] * u_x[None, None, :])
    return np.sqrt(np.sum((grid - pos_p) ** 2, axis=-1))


def _interp_setup(R, r_start_p, dr, m_len):
    t = (R - r_start_p) / dr
    i0 = np.floor(t).astype(np.int64)
    valid = (i0 >= 0) & (i0 + 1 < m_len)
    i0 = np.where(valid, i0, 0)
    w = np.where(valid, t - i0, 0.0)
    return i0, w, valid


def bp_forward(profiles, r_start, dr, pos, origin, u_r, u_x, pitch, n, k_c):
    profiles = np.asarray(profiles)
    m_len = profiles.shape[1]
    img = np.zeros((n, n), dtype=np.complex128)
    for p in range(profiles.shape[0]):
        R = _pixel_ranges(pos[p], origin, u_r, u_x, pitch, n)
        i0, w, valid = _interp_setup(R, r_start[p], dr, m_len)
        prof = profiles[p]
        val = (1.0 - w) * prof[i0] + w * prof[i0 + 1]
        img += np.where(valid, val * np.exp(1j * k_c * R), 0.0)
    return img


def bp_adjoint(grad, m_len, r_start, dr, pos, origin, u_r, u_x, pitch, k_c):
    grad = np.asarray(grad)
    n = grad.shape[0]
    n_p = pos.shape[0]
    dprof = np.zeros((n_p, m_len), dtype=np.complex128)
    for p in range(n_p):
        R = _pixel_ranges(pos[p], origin, u_r, u_x, pitch, n)
        i0, w, valid = _interp_setup(R, r_start[p], dr, m_len)
        g = np.where(valid, grad * np.exp(-1j * k_c * R), 0.0).ravel()
        i0 = i0.ravel()
        w = w.ravel()
        acc = np.bincount(i0, weights=((1.0 - w) * g).real, minlength=m_len) \
            + 1j * np.bincount(i0, weights=((1.0 - w) * g).imag, minlength=m_len)
        acc[1:] += np.bincount(i0 + 1, weights=(w * g).real, minlength=m_len + 1)[1:m_len] \
            + 1j * np.bincount(i0 + 1, weights=(w * g).imag, minlength=m_len + 1)[1:m_len]
        dprof[p] = acc
    return dprof
