"""Feedback encoders: normalized breathing -> light, sound, vibration.

All encoders take a breathing level b in [0, 1] and raise OutOfRange
outside it. The audio channel works in loudness: 10 * log2(b) dB, so
each halving of breath level costs 10 dB, with the input floored at
2**-6 (-60 dB) to keep silence finite. The sound itself is pink noise
whose gain follows the breath.
"""

from __future__ import annotations

import math
import struct
import wave
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import OutOfRange

GAMMA = 2.2
AUDIO_FLOOR = 2.0 ** -6
PINK_ROWS = 16


def _check_range(b: float) -> float:
    if not (0.0 <= b <= 1.0) or math.isnan(b):
        raise OutOfRange(f"breathing level {b} outside [0, 1]")
    return float(b)


def visual_brightness(b: float) -> float:
    """Perceptual brightness, plain gamma curve b**2.2."""
    return _check_range(b) ** GAMMA


def loudness_db(b: float) -> float:
    """Loudness assigned to breath level b, in dB (0 at full breath)."""
    return 10.0 * math.log2(max(_check_range(b), AUDIO_FLOOR))


def audio_gain(b: float) -> float:
    """Linear gain realizing loudness_db: 10 ** (dB / 20).

    Equals b ** (log2(10) / 2) above the floor; b = 0 bottoms out at
    gain 0.001 (-60 dB).
    """
    return 10.0 ** (loudness_db(b) / 20.0)


def haptic_intensity(b: float) -> float:
    """Vibration amplitude tracks the breath level directly."""
    return _check_range(b)


@dataclass(frozen=True)
class ModalityFrame:
    """One feedback tick: all three channels for a breathing level."""

    t_us: int
    brightness: float
    gain: float
    haptic: float


def encode_modalities(b: float, t_us: int = 0) -> ModalityFrame:
    return ModalityFrame(t_us=t_us, brightness=visual_brightness(b),
                         gain=audio_gain(b), haptic=haptic_intensity(b))


def pink_noise(n_samples: int, seed: int = 0) -> np.ndarray:
    """Pink noise in [-1, 1], Voss-McCartney with 16 rows.

    Row 0 is redrawn every sample; row k >= 1 holds its value for 2**k
    samples, update times staggered so only one held row changes per
    sample. The sum is centered and scaled to peak 1. Deterministic
    for a given seed.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    rng = np.random.default_rng(seed)
    total = rng.uniform(-1.0, 1.0, n_samples)  # row 0, white
    init = rng.uniform(-1.0, 1.0, PINK_ROWS - 1)
    for k in range(1, PINK_ROWS):
        step = 2 ** k
        first = 2 ** (k - 1)
        idx = np.arange(first, n_samples, step)
        vals = rng.uniform(-1.0, 1.0, len(idx))
        bounds = np.concatenate([[0], idx, [n_samples]])
        lengths = np.diff(bounds)
        series = np.repeat(np.concatenate([[init[k - 1]], vals]), lengths)
        total += series
    total -= total.mean()
    peak = np.abs(total).max()
    if peak > 0:
        total /= peak
    return total


def gain_modulated_noise(gains: Sequence[float], samples_per_gain: int,
                         seed: int = 0) -> np.ndarray:
    """Pink noise amplitude-modulated by a gain staircase."""
    g = np.asarray(gains, dtype=np.float64)
    noise = pink_noise(len(g) * samples_per_gain, seed=seed)
    return noise * np.repeat(g, samples_per_gain)


def write_wav(path: str, samples: Sequence[float], sample_rate_hz: int = 44100) -> None:
    """Write mono 16-bit PCM."""
    x = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0)
    pcm = (x * 32767.0).round().astype("<i2")
    with wave.open(path, "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(sample_rate_hz)
        w.writeframes(pcm.tobytes())
