"""Orientation fusion and the IMU simulator.

The scipy Rotation class serves as an independent oracle for the
quaternion conventions; the filter itself is checked against closed
forms (gyro integration, static convergence) and round trips through
the simulator.
"""

import math

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from breeze import (
    DegenerateSample,
    FusionState,
    IMUSample,
    InsufficientData,
    Quaternion,
    TraitId,
    best_lag_correlation,
    fuse_step,
    fuse_stream,
    pitch_of,
    simulate_imu,
)

from conftest import synth

EARTH_FIELD = (22.0, 0.0, 42.0)


def _pitched_sample(theta_rad, t_us=0):
    """Static readings of a device pitched by theta about y."""
    g = (-math.sin(theta_rad), 0.0, math.cos(theta_rad))
    c, s = math.cos(theta_rad), math.sin(theta_rad)
    bx, by, bz = EARTH_FIELD
    m = (bx * c - bz * s, by, bx * s + bz * c)
    return IMUSample(t_us=t_us, accel=g, gyro=(0.0, 0.0, 0.0), mag=m)


# -- pitch extraction --------------------------------------------------------


def test_pitch_of_identity_is_zero():
    assert pitch_of(Quaternion(1.0, 0.0, 0.0, 0.0)) == 0.0


@pytest.mark.parametrize("deg", [-89.0, -45.0, -10.0, 0.0, 10.0, 37.0, 89.0])
def test_pitch_of_pure_pitch_rotations(deg):
    q = Rotation.from_euler("y", deg, degrees=True).as_quat()  # x, y, z, w
    got = pitch_of(Quaternion(q[3], q[0], q[1], q[2]))
    assert math.degrees(got) == pytest.approx(deg, abs=1e-9)


def test_pitch_of_matches_rotation_matrix_decomposition():
    rng = np.random.default_rng(0)
    for _ in range(200):
        v = rng.normal(size=4)
        v /= np.linalg.norm(v)
        q = Quaternion(*v)
        rot = Rotation.from_quat([q.x, q.y, q.z, q.w])
        # aerospace ZYX: pitch is the middle angle
        ref = rot.as_euler("ZYX")[1]
        assert pitch_of(q) == pytest.approx(ref, abs=1e-9)


def test_pitch_of_clamps_near_gimbal():
    # slightly off-unit quaternion at 90 degrees must not NaN
    q = Rotation.from_euler("y", 90.0, degrees=True).as_quat()
    qq = Quaternion(q[3] * 1.0000001, q[0], q[1] * 1.0000001, q[2])
    assert abs(pitch_of(qq)) <= math.pi / 2


# -- fuse_step ---------------------------------------------------------------


def test_identity_is_a_fixed_point():
    state = FusionState()
    sample = IMUSample(t_us=0, accel=(0.0, 0.0, 1.0), gyro=(0.0, 0.0, 0.0),
                       mag=EARTH_FIELD)
    out = fuse_step(state, sample, 1.0 / 24.0)
    assert pitch_of(out.orientation) == pytest.approx(0.0, abs=1e-9)
    assert out.orientation.w == pytest.approx(1.0, abs=1e-9)


def test_unit_norm_preserved_every_step():
    rng = np.random.default_rng(3)
    state = FusionState()
    for i in range(500):
        sample = IMUSample(
            t_us=i,
            accel=tuple(rng.normal((0, 0, 1), 0.1)),
            gyro=tuple(rng.normal(0, 0.5, 3)),
            mag=tuple(rng.normal(EARTH_FIELD, 2.0)),
        )
        state = fuse_step(state, sample, 1.0 / 24.0)
        assert state.orientation.norm() == pytest.approx(1.0, abs=1e-6)


def test_gyro_integration_limit():
    # beta 0 disables the corrective step: pure gyro integration
    state = FusionState(beta=0.0)
    for i in range(200):
        state = fuse_step(state, IMUSample(t_us=i, accel=(0.0, 0.0, 1.0),
                                           gyro=(0.0, 0.3, 0.0)), 0.01)
    assert pitch_of(state.orientation) == pytest.approx(0.6, abs=1e-3)


def test_static_marg_convergence_to_30_degrees():
    sample = _pitched_sample(math.radians(30.0))
    state = FusionState()
    for _ in range(2000):
        state = fuse_step(state, sample, 1.0 / 24.0)
    assert math.degrees(pitch_of(state.orientation)) == pytest.approx(30.0, abs=1e-3)


def test_static_six_dof_convergence():
    sample = _pitched_sample(math.radians(30.0))
    sample = IMUSample(t_us=0, accel=sample.accel, gyro=sample.gyro, mag=None)
    state = FusionState()
    for _ in range(2000):
        state = fuse_step(state, sample, 1.0 / 24.0)
    assert math.degrees(pitch_of(state.orientation)) == pytest.approx(30.0, abs=1.0)


def test_convergence_error_shrinks():
    sample = _pitched_sample(math.radians(25.0))
    state = FusionState()
    errs = []
    for _ in range(1500):
        state = fuse_step(state, sample, 1.0 / 24.0)
        errs.append(abs(math.degrees(pitch_of(state.orientation)) - 25.0))
    assert errs[-1] < 1.0
    # monotone decrease until below a degree, modulo tiny numeric wiggle
    below = next(i for i, e in enumerate(errs) if e < 1.0)
    diffs = np.diff(errs[: below + 1])
    assert np.all(diffs <= 1e-9)


def test_zero_accel_rejected():
    with pytest.raises(DegenerateSample):
        fuse_step(FusionState(), IMUSample(0, (0.0, 0.0, 0.0), (0, 0, 0)), 0.04)


def test_degenerate_mag_falls_back_to_six_dof():
    sample = IMUSample(0, (0.0, 0.0, 1.0), (0.0, 0.0, 0.0), mag=(0.0, 0.0, 0.0))
    out = fuse_step(FusionState(), sample, 0.04)
    assert out.orientation.norm() == pytest.approx(1.0, abs=1e-6)


# -- simulator ---------------------------------------------------------------


def test_simulator_constant_waveform_is_static():
    imu = simulate_imu(np.full(100, 0.3), 24.0, pitch_amplitude_deg=5.0)
    for s in imu:
        assert s.accel == pytest.approx((0.0, 0.0, 1.0))
        assert s.gyro == pytest.approx((0.0, 0.0, 0.0))


def test_simulator_channel_consistency():
    w = synth({TraitId.BASELINE}, duration_s=20.0)
    imu = simulate_imu(w.samples, 24.0, pitch_amplitude_deg=5.0)
    theta = math.radians(5.0) * (w.samples - w.samples.mean())
    acc = np.array([s.accel for s in imu])
    gyr = np.array([s.gyro for s in imu])
    mag = np.array([s.mag for s in imu])
    assert np.allclose(np.linalg.norm(acc, axis=1), 1.0, atol=1e-12)
    assert np.allclose(acc[:, 0], -np.sin(theta), atol=1e-12)
    # gyro is the numeric pitch rate
    assert np.allclose(gyr[:, 1], np.gradient(theta) * 24.0, atol=1e-9)
    field = math.sqrt(sum(v * v for v in EARTH_FIELD))
    assert np.allclose(np.linalg.norm(mag, axis=1), field, atol=1e-9)
    # timestamps on the 24 Hz grid
    assert [s.t_us for s in imu[:3]] == [0, 41667, 83333]


def test_simulator_noise_determinism():
    w = synth({TraitId.BASELINE}, duration_s=10.0)
    a = simulate_imu(w.samples, 24.0, noise_std=0.02, seed=5)
    b = simulate_imu(w.samples, 24.0, noise_std=0.02, seed=5)
    c = simulate_imu(w.samples, 24.0, noise_std=0.02, seed=6)
    assert all(x == y for x, y in zip(a, b))
    assert any(x != y for x, y in zip(a, c))


def test_simulator_rejects_tiny_input():
    with pytest.raises(InsufficientData):
        simulate_imu(np.array([0.5]), 24.0)


# -- fuse_stream round trip ---------------------------------------------------


def test_round_trip_recovers_breathing_pitch(baseline_wave):
    w = baseline_wave
    imu = simulate_imu(w.samples, 24.0, pitch_amplitude_deg=5.0)
    pitch = fuse_stream(imu, sample_rate_hz=24.0)
    theta = math.radians(5.0) * (w.samples - w.samples.mean())
    r, lag = best_lag_correlation(theta, pitch, 24.0, max_lag_s=2.0)
    assert r >= 0.99
    assert abs(lag) <= 0.5


def test_fuse_stream_without_mag(baseline_wave):
    imu = simulate_imu(baseline_wave.samples, 24.0, include_mag=False)
    assert all(s.mag is None for s in imu)
    pitch = fuse_stream(imu, sample_rate_hz=24.0)
    theta = math.radians(5.0) * (baseline_wave.samples - baseline_wave.samples.mean())
    r, _ = best_lag_correlation(theta, pitch, 24.0)
    assert r >= 0.99


def test_fuse_stream_needs_two_samples():
    with pytest.raises(InsufficientData):
        fuse_stream([IMUSample(0, (0, 0, 1), (0, 0, 0))])
