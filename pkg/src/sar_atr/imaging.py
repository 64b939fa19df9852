"""Back-projection imaging, log-magnitude normalization and their derivative.

The image plane is the ground plane through ``X_0``.  Its rows follow the
ground-range direction of the aperture-center pulse (range increasing with
row index) and its columns follow cross-range.  Pixel ``(i, j)`` sits at
``((i - N//2) * pitch, (j - N//2) * pitch)`` so the target center is pixel
``(N//2, N//2)``.

Back-projection is scaled by ``1 / (K * N_p)``: an isolated unit point
scatterer images to a peak magnitude of about one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.fft

from . import _kernels
from .rfsim import C, ConfigError, FrequencyHistory, phase_centers

LN10 = math.log(10.0)


@dataclass(frozen=True)
class ImagingConfig:
    window: float = 6.0
    N: int = 160
    mu: float = -40.0
    D_scale: float = 50.0
    upsample: int = 8
    epsilon: float = 1e-12

    def __post_init__(self):
        if self.N < 2:
            raise ConfigError("N must be >= 2")
        if self.D_scale <= 0:
            raise ConfigError("D_scale must be positive")
        if self.upsample < 1:
            raise ConfigError("upsample must be >= 1")

    @property
    def pitch(self) -> float:
        return self.window / self.N

    @property
    def floor_value(self) -> float:
        return (20 * math.log10(self.epsilon) - self.mu) / self.D_scale


@dataclass
class SarImage:
    complex_pixels: np.ndarray
    normalized: np.ndarray
    config: ImagingConfig


@dataclass(frozen=True)
class _Plan:
    """Geometry shared by the forward map and its adjoint."""
    pos: np.ndarray
    r_start: np.ndarray
    dr: float
    m_len: int
    origin: np.ndarray
    u_r: np.ndarray
    u_x: np.ndarray
    pitch: float
    n: int
    k_c: float
    pre_phase: np.ndarray  # (K, N_p) baseband shift to r_start
    post_phase: np.ndarray  # (M,) removes the half-bin frequency offset
    scale: float


def _plan(hist: FrequencyHistory, cfg: ImagingConfig) -> _Plan:
    radar, geom = hist.radar, hist.geometry
    K, n_p = radar.K, geom.n_pulses
    pos = phase_centers(geom)
    origin = geom.center
    R0 = np.linalg.norm(pos - origin, axis=1)
    two_df_c = 2 * radar.freq_step / C
    r_unamb = 1.0 / two_df_c
    m_len = cfg.upsample * K
    r_start = R0 - r_unamb / 2
    k_off = np.arange(K) - (K - 1) / 2
    pre_phase = np.exp(2j * np.pi * k_off[:, None] * two_df_c * r_start[None, :])
    post_phase = np.exp(-1j * np.pi * (K - 1) * np.arange(m_len) / m_len)
    phi = geom.phi0
    u_r = np.array([-math.cos(phi), -math.sin(phi), 0.0])
    u_x = np.array([-u_r[1], u_r[0], 0.0])
    return _Plan(
        pos=np.ascontiguousarray(pos),
        r_start=np.ascontiguousarray(r_start),
        dr=r_unamb / m_len,
        m_len=m_len,
        origin=np.ascontiguousarray(origin),
        u_r=u_r,
        u_x=u_x,
        pitch=cfg.pitch,
        n=cfg.N,
        k_c=4 * math.pi * radar.f_center / C,
        pre_phase=pre_phase,
        post_phase=post_phase,
        scale=1.0 / (K * n_p),
    )


def pixel_positions(hist: FrequencyHistory, cfg: ImagingConfig) -> np.ndarray:
    """World coordinates of every pixel, shape (N, N, 3)."""
    plan = _plan(hist, cfg)
    offs = (np.arange(cfg.N) - cfg.N // 2) * cfg.pitch
    return (plan.origin + offs[:, None, None] * plan.u_r + offs[None, :, None] * plan.u_x)


def range_profiles(hist: FrequencyHistory, cfg: ImagingConfig, plan: _Plan | None = None):
    """Upsampled per-pulse range profiles, shape (N_p, upsample*K)."""
    plan = plan or _plan(hist, cfg)
    shifted = np.asarray(hist.samples, dtype=np.complex128) * plan.pre_phase
    prof = scipy.fft.ifft(shifted, n=plan.m_len, axis=0) * plan.m_len
    prof *= plan.post_phase[:, None] * plan.scale
    return np.ascontiguousarray(prof.T)


def backproject(hist: FrequencyHistory, cfg: ImagingConfig = ImagingConfig(),
                backend=None) -> np.ndarray:
    samples = np.asarray(hist.samples)
    if not np.all(np.isfinite(samples)):
        raise ValueError("frequency history contains non-finite samples")
    plan = _plan(hist, cfg)
    kern = backend or _kernels.bp
    prof = range_profiles(hist, cfg, plan)
    return kern.bp_forward(prof, plan.r_start, plan.dr, plan.pos, plan.origin,
                           plan.u_r, plan.u_x, plan.pitch, plan.n, plan.k_c)


def backproject_adjoint(image: np.ndarray, hist: FrequencyHistory,
                        cfg: ImagingConfig = ImagingConfig(), backend=None) -> np.ndarray:
    """Hermitian adjoint of :func:`backproject`, returns a K x N_p array.

    Only the geometry of ``hist`` is used.
    """
    plan = _plan(hist, cfg)
    kern = backend or _kernels.bp
    v = np.ascontiguousarray(image, dtype=np.complex128)
    dprof = kern.bp_adjoint(v, plan.m_len, plan.r_start, plan.dr, plan.pos, plan.origin,
                            plan.u_r, plan.u_x, plan.pitch, plan.k_c)
    dprof = dprof.T * (np.conj(plan.post_phase)[:, None] * plan.scale)
    d_shifted = scipy.fft.fft(dprof, axis=0)[: hist.radar.K]
    return d_shifted * np.conj(plan.pre_phase)


def normalize(x_c: np.ndarray, cfg: ImagingConfig = ImagingConfig()) -> np.ndarray:
    mag = np.maximum(np.abs(x_c), cfg.epsilon)
    return (20 * np.log10(mag) - cfg.mu) / cfg.D_scale


def normalize_backward(x_c: np.ndarray, dL_dx: np.ndarray,
                       cfg: ImagingConfig = ImagingConfig()) -> np.ndarray:
    """Complex gradient dL/dRe + i dL/dIm of the normalized image w.r.t. ``x_c``."""
    mag = np.abs(x_c)
    active = mag > cfg.epsilon
    safe = np.where(active, mag, 1.0)
    coef = np.where(active, 20 / (cfg.D_scale * LN10) / safe ** 2, 0.0)
    return np.asarray(dL_dx, dtype=np.float64) * coef * x_c


def form_image(hist: FrequencyHistory, cfg: ImagingConfig = ImagingConfig()) -> SarImage:
    x_c = backproject(hist, cfg)
    return SarImage(x_c, normalize(x_c, cfg), cfg)


def g(hist: FrequencyHistory, cfg: ImagingConfig = ImagingConfig()) -> np.ndarray:
    """Signal-to-classifier-input map: normalize after back-projection."""
    return normalize(backproject(hist, cfg), cfg)


def grad_signal(hist: FrequencyHistory, dL_dx: np.ndarray,
                cfg: ImagingConfig = ImagingConfig()) -> np.ndarray:
    """dL/dRe(s) + i dL/dIm(s) for a loss whose gradient w.r.t. ``g(s)`` is ``dL_dx``."""
    dL_dx = np.asarray(dL_dx, dtype=np.float64)
    if not np.all(np.isfinite(dL_dx)):
        raise ValueError("image gradient contains non-finite values")
    x_c = backproject(hist, cfg)
    return backproject_adjoint(normalize_backward(x_c, dL_dx, cfg), hist, cfg)
