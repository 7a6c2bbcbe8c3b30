"""Orientation fusion for a chest-worn IMU and a matching simulator.

Gradient-descent complementary filter over gyro + accelerometer, with
an optional magnetometer correction when a sample carries one. Units:
accel in g, gyro in rad/s, mag in uT. Orientation is a unit quaternion
(w, x, y, z) taking body vectors to the earth frame; breathing shows up
as the pitch component of chest rotation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateSample, InsufficientData

DEFAULT_BETA = 0.1
_ACCEL_EPS = 1e-6

# Earth magnetic field used by the simulator, uT. Any fixed field with
# a horizontal component works; the filter re-derives its reference
# from the current orientation estimate each step.
_EARTH_FIELD_UT = (22.0, 0.0, 42.0)


@dataclass(frozen=True)
class Quaternion:
    w: float
    x: float
    y: float
    z: float

    def norm(self) -> float:
        return math.sqrt(self.w * self.w + self.x * self.x
                         + self.y * self.y + self.z * self.z)

    def normalized(self) -> "Quaternion":
        n = self.norm()
        if n == 0.0:
            raise ValueError("cannot normalize zero quaternion")
        return Quaternion(self.w / n, self.x / n, self.y / n, self.z / n)

    def as_array(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z])


IDENTITY = Quaternion(1.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class IMUSample:
    t_us: int
    accel: tuple[float, float, float]
    gyro: tuple[float, float, float]
    mag: Optional[tuple[float, float, float]] = None


@dataclass(frozen=True)
class FusionState:
    orientation: Quaternion = IDENTITY
    beta: float = DEFAULT_BETA


def fuse_step(state: FusionState, sample: IMUSample, dt: float) -> FusionState:
    """One filter update; returns the new state.

    Falls back to the 6-DOF update when the sample has no usable
    magnetometer reading. Raises DegenerateSample if the accelerometer
    norm is ~ 0 (free fall or dead sensor), since the gravity direction
    is then meaningless.
    """
    ax, ay, az = sample.accel
    anorm = math.sqrt(ax * ax + ay * ay + az * az)
    if anorm < _ACCEL_EPS:
        raise DegenerateSample(f"accelerometer norm {anorm} too small")
    ax, ay, az = ax / anorm, ay / anorm, az / anorm

    gx, gy, gz = sample.gyro
    q0, q1, q2, q3 = (state.orientation.w, state.orientation.x,
                      state.orientation.y, state.orientation.z)

    # Rate of change of quaternion from gyroscope
    qDot0 = 0.5 * (-q1 * gx - q2 * gy - q3 * gz)
    qDot1 = 0.5 * (q0 * gx + q2 * gz - q3 * gy)
    qDot2 = 0.5 * (q0 * gy - q1 * gz + q3 * gx)
    qDot3 = 0.5 * (q0 * gz + q1 * gy - q2 * gx)

    use_mag = False
    if sample.mag is not None:
        mx, my, mz = sample.mag
        mnorm = math.sqrt(mx * mx + my * my + mz * mz)
        if mnorm >= _ACCEL_EPS:
            mx, my, mz = mx / mnorm, my / mnorm, mz / mnorm
            use_mag = True

    q0q0 = q0 * q0
    q1q1 = q1 * q1
    q2q2 = q2 * q2
    q3q3 = q3 * q3
    _2q0 = 2.0 * q0
    _2q1 = 2.0 * q1
    _2q2 = 2.0 * q2
    _2q3 = 2.0 * q3

    if use_mag:
        q0q1 = q0 * q1
        q0q2 = q0 * q2
        q0q3 = q0 * q3
        q1q2 = q1 * q2
        q1q3 = q1 * q3
        q2q3 = q2 * q3
        _2q0q2 = 2.0 * q0q2
        _2q2q3 = 2.0 * q2q3
        _2q0mx = _2q0 * mx
        _2q0my = _2q0 * my
        _2q0mz = _2q0 * mz
        _2q1mx = _2q1 * mx

        # Reference direction of the earth field in the earth frame
        hx = (mx * q0q0 - _2q0my * q3 + _2q0mz * q2 + mx * q1q1
              + _2q1 * my * q2 + _2q1 * mz * q3 - mx * q2q2 - mx * q3q3)
        hy = (_2q0mx * q3 + my * q0q0 - _2q0mz * q1 + _2q1mx * q2
              - my * q1q1 + my * q2q2 + _2q2 * mz * q3 - my * q3q3)
        _2bx = math.sqrt(hx * hx + hy * hy)
        _2bz = (-_2q0mx * q2 + _2q0my * q1 + mz * q0q0 + _2q1mx * q3
                - mz * q1q1 + _2q2 * my * q3 - mz * q2q2 + mz * q3q3)
        _4bx = 2.0 * _2bx
        _4bz = 2.0 * _2bz

        # Gradient descent corrective step
        s0 = (-_2q2 * (2.0 * q1q3 - _2q0q2 - ax)
              + _2q1 * (2.0 * q0q1 + _2q2q3 - ay)
              - _2bz * q2 * (_2bx * (0.5 - q2q2 - q3q3) + _2bz * (q1q3 - q0q2) - mx)
              + (-_2bx * q3 + _2bz * q1) * (_2bx * (q1q2 - q0q3) + _2bz * (q0q1 + q2q3) - my)
              + _2bx * q2 * (_2bx * (q0q2 + q1q3) + _2bz * (0.5 - q1q1 - q2q2) - mz))
        s1 = (_2q3 * (2.0 * q1q3 - _2q0q2 - ax)
              + _2q0 * (2.0 * q0q1 + _2q2q3 - ay)
              - 4.0 * q1 * (1.0 - 2.0 * q1q1 - 2.0 * q2q2 - az)
              + _2bz * q3 * (_2bx * (0.5 - q2q2 - q3q3) + _2bz * (q1q3 - q0q2) - mx)
              + (_2bx * q2 + _2bz * q0) * (_2bx * (q1q2 - q0q3) + _2bz * (q0q1 + q2q3) - my)
              + (_2bx * q3 - _4bz * q1) * (_2bx * (q0q2 + q1q3) + _2bz * (0.5 - q1q1 - q2q2) - mz))
        s2 = (-_2q0 * (2.0 * q1q3 - _2q0q2 - ax)
              + _2q3 * (2.0 * q0q1 + _2q2q3 - ay)
              - 4.0 * q2 * (1.0 - 2.0 * q1q1 - 2.0 * q2q2 - az)
              + (-_4bx * q2 - _2bz * q0) * (_2bx * (0.5 - q2q2 - q3q3) + _2bz * (q1q3 - q0q2) - mx)
              + (_2bx * q1 + _2bz * q3) * (_2bx * (q1q2 - q0q3) + _2bz * (q0q1 + q2q3) - my)
              + (_2bx * q0 - _4bz * q2) * (_2bx * (q0q2 + q1q3) + _2bz * (0.5 - q1q1 - q2q2) - mz))
        s3 = (_2q1 * (2.0 * q1q3 - _2q0q2 - ax)
              + _2q2 * (2.0 * q0q1 + _2q2q3 - ay)
              + (-_4bx * q3 + _2bz * q1) * (_2bx * (0.5 - q2q2 - q3q3) + _2bz * (q1q3 - q0q2) - mx)
              + (-_2bx * q0 + _2bz * q2) * (_2bx * (q1q2 - q0q3) + _2bz * (q0q1 + q2q3) - my)
              + _2bx * q1 * (_2bx * (q0q2 + q1q3) + _2bz * (0.5 - q1q1 - q2q2) - mz))
    else:
        _4q0 = 4.0 * q0
        _4q1 = 4.0 * q1
        _4q2 = 4.0 * q2
        _8q1 = 8.0 * q1
        _8q2 = 8.0 * q2

        s0 = _4q0 * q2q2 + _2q2 * ax + _4q0 * q1q1 - _2q1 * ay
        s1 = (_4q1 * q3q3 - _2q3 * ax + 4.0 * q0q0 * q1 - _2q0 * ay
              - _4q1 + _8q1 * q1q1 + _8q1 * q2q2 + _4q1 * az)
        s2 = (4.0 * q0q0 * q2 + _2q0 * ax + _4q2 * q3q3 - _2q3 * ay
              - _4q2 + _8q2 * q1q1 + _8q2 * q2q2 + _4q2 * az)
        s3 = 4.0 * q1q1 * q3 - _2q1 * ax + 4.0 * q2q2 * q3 - _2q2 * ay

    snorm = math.sqrt(s0 * s0 + s1 * s1 + s2 * s2 + s3 * s3)
    if snorm > 0.0:
        qDot0 -= state.beta * s0 / snorm
        qDot1 -= state.beta * s1 / snorm
        qDot2 -= state.beta * s2 / snorm
        qDot3 -= state.beta * s3 / snorm

    q0 += qDot0 * dt
    q1 += qDot1 * dt
    q2 += qDot2 * dt
    q3 += qDot3 * dt
    q = Quaternion(q0, q1, q2, q3).normalized()
    return FusionState(orientation=q, beta=state.beta)


def pitch_of(q: Quaternion) -> float:
    """Pitch angle in radians, aerospace yaw-pitch-roll decomposition.

    The asin argument is clamped so numerically off-unit quaternions
    near +-90 degrees cannot produce NaN.
    """
    s = 2.0 * (q.w * q.y - q.x * q.z)
    return math.asin(min(1.0, max(-1.0, s)))


def fuse_stream(samples: Sequence[IMUSample], beta: float = DEFAULT_BETA,
                sample_rate_hz: Optional[float] = None) -> np.ndarray:
    """Run the filter over a recording, returning pitch per sample.

    dt comes from consecutive timestamps; the first step uses the given
    rate, or the first timestamp gap when no rate is supplied.
    """
    if len(samples) < 2:
        raise InsufficientData("need at least two IMU samples")
    if sample_rate_hz is not None:
        dt0 = 1.0 / sample_rate_hz
    else:
        dt0 = (samples[1].t_us - samples[0].t_us) * 1e-6
    state = FusionState(beta=beta)
    pitch = np.empty(len(samples))
    prev_t = None
    for i, s in enumerate(samples):
        dt = dt0 if prev_t is None else (s.t_us - prev_t) * 1e-6
        if dt <= 0:
            dt = dt0
        state = fuse_step(state, s, dt)
        pitch[i] = pitch_of(state.orientation)
        prev_t = s.t_us
    return pitch


def simulate_imu(samples: np.ndarray, sample_rate_hz: float,
                 pitch_amplitude_deg: float = 5.0, noise_std: float = 0.0,
                 seed: int = 0, include_mag: bool = True) -> list[IMUSample]:
    """Turn a breathing waveform into the IMU stream a chest sensor
    would produce if the torso pitched with the breath.

    The waveform is centered, scaled to pitch_amplitude_deg, and used
    as the true pitch angle theta(t). Readings follow a pure pitch
    rotation: accel (-sin theta, 0, cos theta) g, gyro (0, dtheta/dt, 0)
    rad/s, mag the earth field rotated into the body frame.

    noise_std adds white Gaussian noise per channel: in g on the
    accelerometer, rad/s on the gyro, and scaled by the field magnitude
    on the magnetometer. Deterministic for a given seed.
    """
    x = np.asarray(samples, dtype=np.float64)
    if len(x) < 2:
        raise InsufficientData("waveform too short to simulate")
    theta = math.radians(pitch_amplitude_deg) * (x - x.mean())
    omega = np.gradient(theta) * sample_rate_hz

    sin_t, cos_t = np.sin(theta), np.cos(theta)
    accel = np.column_stack([-sin_t, np.zeros_like(theta), cos_t])
    gyro = np.column_stack([np.zeros_like(omega), omega, np.zeros_like(omega)])

    bx, by, bz = _EARTH_FIELD_UT
    mag = np.column_stack([bx * cos_t - bz * sin_t,
                           np.full_like(theta, by),
                           bx * sin_t + bz * cos_t])

    if noise_std > 0.0:
        rng = np.random.default_rng(seed)
        accel = accel + rng.normal(0.0, noise_std, accel.shape)
        gyro = gyro + rng.normal(0.0, noise_std, gyro.shape)
        field = math.sqrt(bx * bx + by * by + bz * bz)
        mag = mag + rng.normal(0.0, noise_std * field, mag.shape)

    out = []
    for i in range(len(x)):
        out.append(IMUSample(
            t_us=int(round(i * 1e6 / sample_rate_hz)),
            accel=(accel[i, 0], accel[i, 1], accel[i, 2]),
            gyro=(gyro[i, 0], gyro[i, 1], gyro[i, 2]),
            mag=(mag[i, 0], mag[i, 1], mag[i, 2]) if include_mag else None,
        ))
    return out
