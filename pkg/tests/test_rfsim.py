import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sar_atr.rfsim import (
    C,
    CollectionGeometry,
    ConfigError,
    FrequencyHistory,
    RadarConfig,
    collect,
    collect_points,
    default_aperture_arc,
    frequency_grid,
    gdt_amplitude,
    phase_centers,
    pulse_azimuths,
    pulse_poses,
    target_response,
    target_signature,
)
from sar_atr.shapes import CenterKind, ScatteringCenter, ShapeClass, make_target, scattering_centers

RADAR = RadarConfig()


def geometry(**kw):
    base = dict(altitude=0.0, orbit_radius=100.0, phi0=0.0, theta=math.pi / 3, n_pulses=16)
    base.update(kw)
    return CollectionGeometry(**base)


def test_frequency_grid_endpoints():
    f = frequency_grid(RADAR)
    assert f[0] == pytest.approx(23.75e9, rel=1e-12)
    assert f[-1] == pytest.approx(24.25e9, rel=1e-12)
    assert np.allclose(np.diff(f), RADAR.bandwidth / 63, rtol=1e-9)
    f2 = frequency_grid(RadarConfig(f_center=10e9, bandwidth=1e9, K=2))
    assert list(f2) == [9.5e9, 10.5e9]


@pytest.mark.parametrize("kw", [dict(K=1), dict(bandwidth=0.0), dict(f_center=0.2e9),
                                dict(polarization="linear")])
def test_radar_config_rejects(kw):
    with pytest.raises(ConfigError):
        RadarConfig(**kw)


@pytest.mark.parametrize("kw", [dict(n_pulses=1), dict(orbit_radius=0.0),
                                dict(aperture_arc=math.pi / 2)])
def test_collection_rejects(kw):
    with pytest.raises(ConfigError):
        geometry(**kw)


def test_history_shape_mismatch():
    with pytest.raises(ConfigError):
        FrequencyHistory(np.zeros((RADAR.K, 3)), RADAR, geometry())


def test_target_response_examples():
    unit = ScatteringCenter(CenterKind.EDGE, 0.0, 0.0, 1.0)
    f = frequency_grid(RADAR)
    # at f_center the edge amplitude is base * falloff; broadside falloff is one
    v = target_response([(0.0, unit)], RADAR.f_center, math.pi / 2)
    assert v == pytest.approx(1 + 0j)
    quarter = C / (8 * RADAR.f_center)
    v = target_response([(quarter, unit)], RADAR.f_center, math.pi / 2)
    assert v.real == pytest.approx(0.0, abs=1e-12) and v.imag == pytest.approx(-1.0)
    one = target_response([(0.4, unit)], f, 1.0)
    two = target_response([(0.4, unit), (0.4, unit)], f, 1.0)
    assert np.array_equal(two, 2 * one)


def test_gdt_amplitude_scaling():
    tip = ScatteringCenter(CenterKind.TIP, 0.0, 0.0, 2.0)
    edge = ScatteringCenter(CenterKind.EDGE, 0.0, 1.0, 1.0, side=1)
    fc = RADAR.f_center
    assert abs(gdt_amplitude(tip, fc, 0.0)) == pytest.approx(2.0)
    assert abs(gdt_amplitude(tip, 2 * fc, 0.0)) == pytest.approx(1.0)
    assert abs(gdt_amplitude(edge, 4 * fc, math.pi / 2)) == pytest.approx(0.5)


def test_phase_centers():
    g = geometry(n_pulses=3, aperture_arc=0.2, phi0=0.5, altitude=30.0)
    assert np.allclose(pulse_azimuths(g), [0.4, 0.5, 0.6])
    pos = phase_centers(g)
    assert np.allclose(np.hypot(pos[:, 0], pos[:, 1]), 100.0)
    assert np.allclose(pos[:, 2], 30.0)
    mid = phase_centers(geometry(n_pulses=3, aperture_arc=0.2))[1]
    assert np.allclose(mid, [100.0, 0.0, 0.0])


def test_default_arc():
    assert math.degrees(default_aperture_arc(RADAR)) == pytest.approx(9.54, abs=0.01)


def test_pose_label_is_center_pulse():
    g = geometry(n_pulses=65, altitude=0.0)
    poses = pulse_poses(g)
    assert poses[32] == pytest.approx(g.theta, abs=1e-9)
    assert np.ptp(poses) == pytest.approx(g.aperture_arc, rel=0.05)


def test_unit_scatterer_magnitude_and_phase():
    g = geometry()
    hist = collect_points([[0, 0, 0]], [1.0], RADAR, g)
    assert np.allclose(np.abs(hist.samples), 1.0)
    f = frequency_grid(RADAR)
    expected = np.exp(-4j * np.pi * f * 100.0 / C)
    assert np.allclose(hist.samples[:, 0], expected, atol=1e-9)


def test_noise_power_monte_carlo():
    g = geometry(n_pulses=200)
    target = make_target(ShapeClass.CYLINDER, L=2.0)
    clean = collect(target, RADAR, g)
    noisy = collect(target, RADAR, g, noise_snr_db=0.0, rng=np.random.default_rng(3))
    sig = np.mean(np.abs(clean.samples) ** 2)
    noise = np.mean(np.abs(noisy.samples - clean.samples) ** 2)
    assert clean.samples.size >= 10_000
    assert noise == pytest.approx(sig, rel=0.1)
    # infinite SNR means no noise at all
    same = collect(target, RADAR, g, noise_snr_db=math.inf, rng=np.random.default_rng(3))
    assert np.array_equal(same.samples, clean.samples)


def test_noise_deterministic_under_seed():
    g = geometry()
    t = make_target(ShapeClass.CONE, L=3.0)
    a = collect(t, RADAR, g, 20.0, np.random.default_rng(9))
    b = collect(t, RADAR, g, 20.0, np.random.default_rng(9))
    assert np.array_equal(a.samples, b.samples)


def test_hh_vv_combination():
    cs = scattering_centers(make_target(ShapeClass.HOURGLASS, L=2.0))
    poses = np.linspace(0.1, 3.0, 7)
    hh = target_signature(cs, RADAR, poses, "HH")
    vv = target_signature(cs, RADAR, poses, "VV")
    assert np.array_equal(hh, vv)
    with pytest.raises(ConfigError):
        target_signature(cs, RADAR, poses, "HV")


def test_signature_matches_scalar_response():
    from sar_atr.shapes import project_to_los
    cs = scattering_centers(make_target(ShapeClass.DOME_CYLINDER, L=2.5, D=1.4))
    theta = 1.1
    vec = target_signature(cs, RADAR, np.array([theta]))[:, 0]
    ref = target_response(project_to_los(cs, theta), frequency_grid(RADAR), theta)
    assert np.allclose(vec, ref, rtol=1e-10)


def test_bytes_round_trip():
    g = geometry(n_pulses=5)
    hist = collect(make_target(ShapeClass.CONE, L=2.0), RadarConfig(K=8), g)
    buf = hist.to_bytes()
    assert len(buf) == 8 * 5 * 8
    # first pair is (re, im) of samples[0, 0]; the second is samples[1, 0]
    head = np.frombuffer(buf[:16], dtype="<f4")
    assert head[0] == np.float32(hist.samples[0, 0].real)
    assert head[2] == np.float32(hist.samples[1, 0].real)
    back = FrequencyHistory.samples_from_bytes(buf, 8, 5)
    assert np.array_equal(back, hist.samples.astype(np.complex64))


@settings(max_examples=30, deadline=None)
@given(st.floats(-1.5, 1.5), st.floats(-1.5, 1.5), st.floats(0.1, 3.0), st.floats(0.1, 3.0))
def test_superposition(x1, x2, a1, a2):
    g = geometry(n_pulses=8)
    both = collect_points([[x1, 0, 0], [0, x2, 0]], [a1, a2], RADAR, g)
    one = collect_points([[x1, 0, 0]], [a1], RADAR, g)
    two = collect_points([[0, x2, 0]], [a2], RADAR, g)
    assert np.allclose(both.samples, one.samples + two.samples, rtol=1e-10, atol=1e-12)


def test_zero_ranges_give_amplitude_only():
    """With every r_n at the origin, only the R_p phase term varies across pulses."""
    g = geometry(n_pulses=8)
    centers = [ScatteringCenter(CenterKind.JUNCTION, 0.0, 0.0, 1.0)]
    hist = collect(centers, RADAR, g)
    f = frequency_grid(RADAR)
    R = np.linalg.norm(phase_centers(g), axis=1)
    stripped = hist.samples * np.exp(4j * np.pi * f[:, None] * R[None, :] / C)
    assert np.allclose(stripped.imag, 0.0, atol=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 3), st.floats(1, 4), st.floats(0, 2 * math.pi, exclude_max=True),
       st.floats(0, 200), st.floats(50, 500), st.floats(0, 2 * math.pi))
def test_outputs_finite(cls, L, theta, alt, radius, phi0):
    g = CollectionGeometry(alt, radius, phi0, theta, n_pulses=6)
    hist = collect(make_target(ShapeClass(cls), L), RADAR, g, 20.0, np.random.default_rng(0))
    assert np.all(np.isfinite(hist.samples))
