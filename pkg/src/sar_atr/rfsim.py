"""Circular-orbit SAR collection of scattering-center targets.

The radar flies a circle of radius ``orbit_radius`` at ``altitude`` above the
target center ``X_0`` and records ``K`` stepped-frequency samples per pulse.
Each pulse sees the target under its own pose angle, so the per-center
ranges and amplitudes change across the synthetic aperture.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .shapes import (
    CenterKind,
    FALLOFF_FLOOR,
    ScatteringCenter,
    TargetGeometry,
    angular_falloff,
    scattering_centers,
)

C = 299_792_458.0  # m/s
CROSS_RANGE_RESOLUTION = 0.0375  # m, one pixel of the 6 m / 160 px grid


class ConfigError(ValueError):
    """Inconsistent radar, collection or imaging configuration."""


@dataclass(frozen=True)
class RadarConfig:
    f_center: float = 24e9
    bandwidth: float = 0.5e9
    K: int = 64
    polarization: str = "circular"

    def __post_init__(self):
        if self.K < 2:
            raise ConfigError(f"K must be >= 2, got {self.K}")
        if self.bandwidth <= 0:
            raise ConfigError("bandwidth must be positive")
        if self.f_center <= self.bandwidth / 2:
            raise ConfigError("f_center must exceed half the bandwidth")
        if self.polarization != "circular":
            raise ConfigError(f"unsupported polarization {self.polarization!r}")

    @property
    def wavelength(self) -> float:
        return C / self.f_center

    @property
    def freq_step(self) -> float:
        return self.bandwidth / (self.K - 1)


def default_aperture_arc(radar: RadarConfig,
                         resolution: float = CROSS_RANGE_RESOLUTION) -> float:
    """Orbit arc giving the requested cross-range resolution (about 9.5 deg at 24 GHz)."""
    return radar.wavelength / (2 * resolution)


@dataclass(frozen=True)
class CollectionGeometry:
    altitude: float
    orbit_radius: float
    phi0: float
    theta: float
    n_pulses: int = 64
    aperture_arc: float = field(default_factory=lambda: default_aperture_arc(RadarConfig()))
    target_center: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.n_pulses < 2:
            raise ConfigError(f"n_pulses must be >= 2, got {self.n_pulses}")
        if self.orbit_radius <= 0:
            raise ConfigError("orbit_radius must be positive")
        if not 0 < self.aperture_arc < math.pi / 2:
            raise ConfigError("aperture_arc must lie in (0, pi/2)")

    @property
    def center(self) -> np.ndarray:
        return np.asarray(self.target_center, dtype=np.float64)

    def to_record(self) -> dict:
        return {
            "altitude": self.altitude,
            "orbit_radius": self.orbit_radius,
            "phi0": self.phi0,
            "theta": self.theta,
            "n_pulses": self.n_pulses,
            "aperture_arc": self.aperture_arc,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "CollectionGeometry":
        return cls(
            altitude=float(rec["altitude"]),
            orbit_radius=float(rec["orbit_radius"]),
            phi0=float(rec["phi0"]),
            theta=float(rec["theta"]),
            n_pulses=int(rec["n_pulses"]),
            aperture_arc=float(rec["aperture_arc"]),
        )


@dataclass
class FrequencyHistory:
    samples: np.ndarray  # K x N_p complex
    radar: RadarConfig
    geometry: CollectionGeometry

    def __post_init__(self):
        self.samples = np.asarray(self.samples)
        expected = (self.radar.K, self.geometry.n_pulses)
        if self.samples.shape != expected:
            raise ConfigError(
                f"samples shape {self.samples.shape} does not match K x N_p = {expected}")

    def with_samples(self, samples: np.ndarray) -> "FrequencyHistory":
        return FrequencyHistory(samples, self.radar, self.geometry)

    def to_bytes(self) -> bytes:
        """Interleaved float32 little-endian re/im pairs, pulse-major (k fastest)."""
        s = np.ascontiguousarray(self.samples.T).astype("<c8")
        return s.tobytes()

    @staticmethod
    def samples_from_bytes(buf: bytes, K: int, n_pulses: int) -> np.ndarray:
        s = np.frombuffer(buf, dtype="<c8", count=K * n_pulses)
        return s.reshape(n_pulses, K).T.astype(np.complex64)


def frequency_grid(radar: RadarConfig) -> np.ndarray:
    return np.linspace(radar.f_center - radar.bandwidth / 2,
                       radar.f_center + radar.bandwidth / 2, radar.K)


def pulse_azimuths(geom: CollectionGeometry) -> np.ndarray:
    t = np.arange(geom.n_pulses) / (geom.n_pulses - 1) - 0.5
    return geom.phi0 + geom.aperture_arc * t


def phase_centers(geom: CollectionGeometry) -> np.ndarray:
    """Antenna phase centers, shape (N_p, 3)."""
    phi = pulse_azimuths(geom)
    pos = np.stack([geom.orbit_radius * np.cos(phi),
                    geom.orbit_radius * np.sin(phi),
                    np.full_like(phi, geom.altitude)], axis=1)
    return pos + geom.center


def body_axis(geom: CollectionGeometry) -> np.ndarray:
    """Horizontal unit vector along the body axis (nose to tail).

    Oriented so that at the aperture-center pulse the horizontal angle from
    the range direction to the body axis equals ``geom.theta``.
    """
    psi = geom.phi0 + math.pi + geom.theta
    return np.array([math.cos(psi), math.sin(psi), 0.0])


def pulse_poses(geom: CollectionGeometry) -> np.ndarray:
    """3-D angle between the body axis and the line of sight for each pulse, in [0, pi]."""
    los = geom.center - phase_centers(geom)
    los /= np.linalg.norm(los, axis=1, keepdims=True)
    cosang = np.clip(los @ body_axis(geom), -1.0, 1.0)
    return np.arccos(cosang)


def _falloff(kinds: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Vectorized angular falloff: kinds (n,) bool 'nose feature', theta (...)."""
    nose = FALLOFF_FLOOR + (1 - FALLOFF_FLOOR) * np.maximum(np.cos(theta), 0.0)
    rim = FALLOFF_FLOOR + (1 - FALLOFF_FLOOR) * np.abs(np.sin(theta))
    return np.where(kinds[:, None], nose[None, :], rim[None, :])


def gdt_amplitude(center: ScatteringCenter, f_k, theta: float,
                  f_center: float = 24e9):
    """Complex amplitude of one center; real-valued in the baseline model."""
    ratio = np.asarray(f_k, dtype=np.float64) / f_center
    amp = center.base_amplitude * ratio ** center.alpha * angular_falloff(center, theta)
    return amp.astype(np.complex128) if np.ndim(amp) else complex(amp)


def target_response(centers_at_los: list[tuple[float, ScatteringCenter]], f_k,
                    theta: float, f_center: float = 24e9):
    """Coherent sum of the projected centers at frequency ``f_k`` (scalar or array)."""
    if not centers_at_los:
        raise ValueError("need at least one scattering center")
    f = np.asarray(f_k, dtype=np.float64)
    total = np.zeros(f.shape, dtype=np.complex128)
    for r_n, ctr in centers_at_los:
        total = total + gdt_amplitude(ctr, f, theta, f_center) * np.exp(-4j * np.pi * f * r_n / C)
    return total if total.ndim else complex(total)


def _center_arrays(centers: list[ScatteringCenter]):
    axial = np.array([c.axial for c in centers])
    radius = np.array([c.radius for c in centers])
    side = np.array([c.side for c in centers], dtype=np.float64)
    base = np.array([c.base_amplitude for c in centers])
    alpha = np.array([c.alpha for c in centers])
    dome = np.array([c.kind == CenterKind.DOME for c in centers])
    nose = np.array([c.kind in (CenterKind.TIP, CenterKind.DOME) for c in centers])
    return axial, radius, side, base, alpha, dome, nose


def target_signature(centers: list[ScatteringCenter], radar: RadarConfig,
                     poses: np.ndarray, polarization: str = "HH") -> np.ndarray:
    """E_T(f_k; theta_p) for every frequency and pulse pose, shape (K, N_p).

    The baseline amplitude model is polarization independent, so HH and VV
    are the same signature.
    """
    if polarization not in ("HH", "VV"):
        raise ConfigError(f"unsupported polarization channel {polarization!r}")
    f = frequency_grid(radar)
    axial, radius, side, base, alpha, dome, nose = _center_arrays(centers)
    cos_t, sin_t = np.cos(poses), np.abs(np.sin(poses))
    # ranges (n_centers, N_p)
    r = axial[:, None] * cos_t[None, :] + (side * radius)[:, None] * sin_t[None, :]
    r_dome = (axial + radius)[:, None] * cos_t[None, :] - radius[:, None]
    r = np.where(dome[:, None], r_dome, r)
    amp = base[:, None] * _falloff(nose, poses)  # (n, N_p)
    spectral = (f[None, :] / radar.f_center) ** alpha[:, None]  # (n, K)
    phase = np.exp(-4j * np.pi * f[None, :, None] * r[:, None, :] / C)  # (n, K, N_p)
    return np.einsum("np,nk,nkp->kp", amp, spectral, phase)


def _add_noise(samples: np.ndarray, snr_db: float | None,
               rng: np.random.Generator | None) -> np.ndarray:
    if snr_db is None or math.isinf(snr_db):
        return samples
    if rng is None:
        raise ValueError("noise requested without a random generator")
    signal_power = float(np.mean(np.abs(samples) ** 2))
    sigma2 = signal_power / 10 ** (snr_db / 10)
    noise = rng.standard_normal(samples.shape) + 1j * rng.standard_normal(samples.shape)
    return samples + noise * math.sqrt(sigma2 / 2)


def collect(target: TargetGeometry | list[ScatteringCenter], radar: RadarConfig,
            coll: CollectionGeometry, noise_snr_db: float | None = None,
            rng: np.random.Generator | None = None) -> FrequencyHistory:
    centers = scattering_centers(target) if isinstance(target, TargetGeometry) else list(target)
    if not centers:
        raise ValueError("target has no scattering centers")
    poses = pulse_poses(coll)
    hh = target_signature(centers, radar, poses, "HH")
    vv = target_signature(centers, radar, poses, "VV")
    e_t = 0.5 * (hh + vv)
    f = frequency_grid(radar)
    R = np.linalg.norm(phase_centers(coll) - coll.center, axis=1)
    samples = e_t * np.exp(-4j * np.pi * f[:, None] * R[None, :] / C)
    return FrequencyHistory(_add_noise(samples, noise_snr_db, rng), radar, coll)


def collect_points(points, amplitudes, radar: RadarConfig, coll: CollectionGeometry,
                   noise_snr_db: float | None = None,
                   rng: np.random.Generator | None = None) -> FrequencyHistory:
    """Isotropic point scatterers at world offsets from ``X_0`` using exact ranges."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64)) + coll.center
    amps = np.broadcast_to(np.asarray(amplitudes, dtype=np.complex128), (len(pts),))
    f = frequency_grid(radar)
    R = np.linalg.norm(phase_centers(coll)[:, None, :] - pts[None, :, :], axis=2)  # (N_p, n)
    phase = np.exp(-4j * np.pi * f[:, None, None] * R[None, :, :] / C)
    samples = np.einsum("kpn,n->kp", phase, amps)
    return FrequencyHistory(_add_noise(samples, noise_snr_db, rng), radar, coll)
