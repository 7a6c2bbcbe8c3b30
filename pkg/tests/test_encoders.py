"""Modality encoders: gamma brightness, log-loudness gain, haptic, pink noise."""

import math
import wave

import numpy as np
import pytest
import scipy.signal

from breeze import (
    OutOfRange,
    audio_gain,
    encode_modalities,
    gain_modulated_noise,
    haptic_intensity,
    loudness_db,
    pink_noise,
    visual_brightness,
    write_wav,
)


# -- scalar encoders ---------------------------------------------------------


def test_brightness_endpoints_and_midpoint():
    assert visual_brightness(0.0) == 0.0
    assert visual_brightness(1.0) == 1.0
    assert visual_brightness(0.5) == pytest.approx(0.5 ** 2.2, abs=1e-12)


def test_brightness_is_strictly_convex():
    grid = np.linspace(0.05, 0.95, 19)
    for a, b in zip(grid, grid[2:]):
        mid = visual_brightness((a + b) / 2.0)
        chord = (visual_brightness(a) + visual_brightness(b)) / 2.0
        assert mid < chord


def test_loudness_reference_points():
    assert loudness_db(1.0) == 0.0
    assert loudness_db(0.5) == pytest.approx(-10.0, abs=1e-12)
    assert loudness_db(0.25) == pytest.approx(-20.0, abs=1e-12)
    # floor: 2**-6 and below pin at -60 dB
    assert loudness_db(0.0) == -60.0
    assert loudness_db(2.0 ** -7) == -60.0


def test_audio_gain_values():
    assert audio_gain(1.0) == 1.0
    assert audio_gain(0.25) == pytest.approx(0.1, abs=1e-9)
    assert audio_gain(0.0) == pytest.approx(0.001, abs=1e-12)


def test_audio_gain_matches_power_law_on_grid():
    # gain = 10^(10 log2 b / 20) simplifies to b^(log2(10)/2)
    expo = math.log2(10.0) / 2.0
    for b in np.linspace(2.0 ** -6, 1.0, 100):
        assert audio_gain(float(b)) == pytest.approx(float(b) ** expo, abs=1e-9)


def test_haptic_is_identity():
    for b in (0.0, 0.37, 0.6, 1.0):
        assert haptic_intensity(b) == b


def test_encoders_monotone_and_top_anchored():
    grid = np.linspace(0.0, 1.0, 101)
    for fn in (visual_brightness, audio_gain, haptic_intensity):
        vals = [fn(float(b)) for b in grid]
        assert all(y2 >= y1 for y1, y2 in zip(vals, vals[1:]))
        assert fn(1.0) == 1.0
        assert all(0.0 <= v <= 1.0 for v in vals)


@pytest.mark.parametrize("fn", [visual_brightness, audio_gain, haptic_intensity])
@pytest.mark.parametrize("bad", [-0.1, 1.1, float("nan")])
def test_out_of_range_rejected(fn, bad):
    with pytest.raises(OutOfRange):
        fn(bad)


def test_encode_modalities_frame():
    fr = encode_modalities(0.5, t_us=125000)
    assert fr.t_us == 125000
    assert fr.brightness == visual_brightness(0.5)
    assert fr.gain == audio_gain(0.5)
    assert fr.haptic == 0.5


# -- pink noise --------------------------------------------------------------


def test_pink_noise_basic_properties():
    x = pink_noise(4096, seed=0)
    assert len(x) == 4096
    assert np.abs(x).max() <= 1.0
    assert abs(x.mean()) < 0.01
    assert np.array_equal(x, pink_noise(4096, seed=0))
    assert not np.array_equal(x, pink_noise(4096, seed=1))


def test_pink_noise_rejects_empty():
    with pytest.raises(ValueError):
        pink_noise(0)


def test_pink_noise_spectral_slope():
    # -3 dB per octave over 100 Hz - 10 kHz at 44100 Hz
    x = pink_noise(2 ** 20, seed=0)
    f, pxx = scipy.signal.welch(x, fs=44100.0, nperseg=16384)
    band = (f >= 100.0) & (f <= 10000.0)
    slope, _ = np.polyfit(np.log2(f[band]), 10.0 * np.log10(pxx[band]), 1)
    assert slope == pytest.approx(-3.0, abs=1.0)


def test_gain_modulation_is_exact():
    gains = [0.0, 0.25, 1.0, 0.5]
    per = 64
    out = gain_modulated_noise(gains, per, seed=3)
    noise = pink_noise(len(gains) * per, seed=3)
    assert np.array_equal(out, noise * np.repeat(gains, per))
    assert np.all(out[:per] == 0.0)
    # peak of each segment scales with its gain
    seg_peak = np.abs(out[2 * per:3 * per]).max()
    ref_peak = np.abs(noise[2 * per:3 * per]).max()
    assert seg_peak == pytest.approx(ref_peak, abs=1e-12)


# -- wav export --------------------------------------------------------------


def test_write_wav_round_trip(tmp_path):
    path = str(tmp_path / "tone.wav")
    x = 0.5 * np.sin(2 * np.pi * 440.0 * np.arange(4410) / 44100.0)
    write_wav(path, x, 44100)
    with wave.open(path, "rb") as w:
        assert w.getnchannels() == 1
        assert w.getsampwidth() == 2
        assert w.getframerate() == 44100
        assert w.getnframes() == 4410
        pcm = np.frombuffer(w.readframes(4410), dtype="<i2")
    assert np.abs(pcm / 32767.0 - x).max() <= 0.5 / 32767.0 + 1e-9


def test_write_wav_clips_out_of_range(tmp_path):
    path = str(tmp_path / "clip.wav")
    write_wav(path, np.array([-2.0, 2.0]), 8000)
    with wave.open(path, "rb") as w:
        pcm = np.frombuffer(w.readframes(2), dtype="<i2")
    assert list(pcm) == [-32767, 32767]
