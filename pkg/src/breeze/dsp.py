"""Signal chain for turning raw pitch streams into breathing signals.

All filters are causal so the same code paths work on live streams;
any group delay this introduces is tolerated downstream by comparing
signals through correlation rather than pointwise error.

The module deliberately keeps two kinds of API for the stateful steps:
plain functions over whole arrays for analysis scripts, and small
streaming classes (push a chunk, get what's ready) for the wire layer.
A streaming object fed the same samples in any chunking produces
bit-identical output to the whole-array call.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union

import numpy as np
import scipy.signal

from .errors import DegenerateSeries, InsufficientData, InvalidSpec, NoPeaks

LOWPASS_CUTOFF_HZ = 1.0
LOWPASS_ORDER = 3
HIGHPASS_CUTOFF_HZ = 0.1
HIGHPASS_ORDER = 3
BAND_HZ = (0.1, 1.0)
MA_WINDOW_S = 0.5
MIN_PEAK_SPACING_S = 1.0
PROMINENCE_IQR_FRAC = 0.1
NORM_WINDOW_S = 30.0
NORM_RANGE_EPS = 1e-6

BELT_TAU_RISE_S = 0.1
BELT_TAU_FALL_S = 0.8
BELT_SATURATION = 0.3


# -- filters ---------------------------------------------------------------


@dataclass(frozen=True)
class FilterSpec:
    """Butterworth design request.

    kind is one of 'lowpass', 'highpass', 'bandpass'. cutoff_hz is a
    single frequency, or a (low, high) pair for bandpass where the
    order applies per band edge.
    """

    kind: str
    cutoff_hz: Union[float, tuple[float, float]]
    order: int
    sample_rate_hz: float

    def validate(self) -> "FilterSpec":
        if self.kind not in ("lowpass", "highpass", "bandpass"):
            raise InvalidSpec(f"unknown filter kind {self.kind!r}")
        if self.order < 1:
            raise InvalidSpec("order must be >= 1")
        nyq = self.sample_rate_hz / 2.0
        cuts = self.cutoff_hz if isinstance(self.cutoff_hz, tuple) else (self.cutoff_hz,)
        if self.kind == "bandpass" and len(cuts) != 2:
            raise InvalidSpec("bandpass needs a (low, high) cutoff pair")
        for c in cuts:
            if not (0.0 < c < nyq):
                raise InvalidSpec(f"cutoff {c} Hz outside (0, {nyq}) Hz")
        if len(cuts) == 2 and cuts[0] >= cuts[1]:
            raise InvalidSpec("bandpass cutoffs must be increasing")
        return self


def design_butterworth(spec: FilterSpec) -> np.ndarray:
    """Second-order sections for the requested Butterworth response.

    Bilinear transform with frequency prewarping, so the -3 dB point
    lands exactly on the requested cutoff. Returns an (n_sections, 6)
    array of [b0, b1, b2, 1, a1, a2] rows.
    """
    spec.validate()
    wn = list(spec.cutoff_hz) if isinstance(spec.cutoff_hz, tuple) else spec.cutoff_hz
    btype = {"lowpass": "lowpass", "highpass": "highpass", "bandpass": "bandpass"}[spec.kind]
    return scipy.signal.butter(spec.order, wn, btype=btype,
                               fs=spec.sample_rate_hz, output="sos")


class SOSFilter:
    """Streaming cascade of biquads, direct form II transposed.

    State persists across process() calls, so feeding a signal in any
    chunking yields bit-identical output to one call with everything.
    """

    def __init__(self, sos: np.ndarray):
        self.sos = np.asarray(sos, dtype=np.float64)
        if self.sos.ndim != 2 or self.sos.shape[1] != 6:
            raise ValueError("sos must have shape (n_sections, 6)")
        # plain floats: the per-sample recursion is much faster on
        # Python scalars than on numpy 0-d views, and IEEE-identical
        self._coeffs = [(float(r[0]), float(r[1]), float(r[2]), float(r[4]), float(r[5]))
                        for r in self.sos]
        self._z = [[0.0, 0.0] for _ in self._coeffs]

    def reset(self) -> None:
        self._z = [[0.0, 0.0] for _ in self._coeffs]

    def process(self, chunk: Sequence[float]) -> np.ndarray:
        x = np.asarray(chunk, dtype=np.float64)
        out = []
        coeffs = self._coeffs
        z = self._z
        for v in x.tolist():
            for s, (b0, b1, b2, a1, a2) in enumerate(coeffs):
                zs = z[s]
                y = b0 * v + zs[0]
                zs[0] = b1 * v - a1 * y + zs[1]
                zs[1] = b2 * v - a2 * y
                v = y
            out.append(v)
        return np.asarray(out, dtype=np.float64)


def filter_stream(stream: Sequence[float], filt: Union[FilterSpec, np.ndarray]) -> np.ndarray:
    """Filter a whole array from zero initial state."""
    sos = design_butterworth(filt) if isinstance(filt, FilterSpec) else filt
    return SOSFilter(sos).process(stream)


def moving_average(stream: Sequence[float], sample_rate_hz: float,
                   window_s: float = MA_WINDOW_S) -> np.ndarray:
    """Causal moving average; the window grows from the start."""
    x = np.asarray(stream, dtype=np.float64)
    w = max(1, int(round(window_s * sample_rate_hz)))
    csum = np.cumsum(x)
    out = np.empty_like(x)
    head = min(w, len(x))
    out[:head] = csum[:head] / np.arange(1, head + 1)
    if len(x) > w:
        out[w:] = (csum[w:] - csum[:-w]) / w
    return out


# -- breathing extraction --------------------------------------------------


@dataclass(frozen=True)
class EpochConfig:
    epoch_s: float = 0.5
    slide_s: float = 0.125

    def counts(self, sample_rate_hz: float) -> tuple[int, int]:
        epoch_n = int(round(self.epoch_s * sample_rate_hz))
        slide_n = int(round(self.slide_s * sample_rate_hz))
        if epoch_n < 1 or slide_n < 1:
            raise ValueError("epoch and slide must span at least one sample")
        if slide_n > epoch_n:
            raise ValueError("slide must not exceed the epoch")
        return epoch_n, slide_n


class BreathingExtractor:
    """Streaming pitch -> breathing extraction.

    Low-pass the incoming stream (1 Hz, order 3), cut it into sliding
    epochs, and emit one epoch mean per slide step. With the default
    0.5 s epochs sliding by 0.125 s a 24 Hz input becomes an 8 Hz
    breathing signal. Output sample k summarizes the input window
    centered at epoch_s/2 + k * slide_s.
    """

    def __init__(self, sample_rate_hz: float = 24.0,
                 epoch: EpochConfig = EpochConfig()):
        self.sample_rate_hz = sample_rate_hz
        self.epoch = epoch
        self.epoch_n, self.slide_n = epoch.counts(sample_rate_hz)
        self.output_rate_hz = sample_rate_hz / self.slide_n
        self._lp = SOSFilter(design_butterworth(FilterSpec(
            "lowpass", LOWPASS_CUTOFF_HZ, LOWPASS_ORDER, sample_rate_hz)))
        self._buf = np.zeros(0)

    def push(self, chunk: Sequence[float]) -> np.ndarray:
        filtered = self._lp.process(chunk)
        self._buf = np.concatenate([self._buf, filtered])
        outs = []
        while len(self._buf) >= self.epoch_n:
            outs.append(self._buf[:self.epoch_n].mean())
            self._buf = self._buf[self.slide_n:]
        return np.asarray(outs)


def extract_breathing(pitch_stream: Sequence[float], sample_rate_hz: float = 24.0,
                      epoch: EpochConfig = EpochConfig()) -> np.ndarray:
    """Whole-array form of BreathingExtractor.

    Raises InsufficientData until at least one full epoch of samples
    is available.
    """
    x = np.asarray(pitch_stream, dtype=np.float64)
    extractor = BreathingExtractor(sample_rate_hz, epoch)
    if len(x) < extractor.epoch_n:
        raise InsufficientData(
            f"need at least {extractor.epoch_n} samples for one epoch, got {len(x)}")
    return extractor.push(x)


# -- normalization ---------------------------------------------------------


class SlidingNormalizer:
    """Min-max normalization over a trailing window.

    Each output is (x - min) / (max - min) over the last window_s of
    data, clamped to [0, 1]. Before a full window accumulates the
    window grows from the start. A range below NORM_RANGE_EPS (flat
    signal, or nothing seen yet) maps to a neutral 0.5.
    """

    def __init__(self, sample_rate_hz: float, window_s: float = NORM_WINDOW_S):
        w = int(round(window_s * sample_rate_hz))
        if w < 1:
            raise ValueError("window must span at least one sample")
        self._win: deque[float] = deque(maxlen=w)

    def push(self, chunk: Sequence[float]) -> np.ndarray:
        out = np.empty(len(chunk))
        for i, v in enumerate(np.asarray(chunk, dtype=np.float64)):
            self._win.append(v)
            lo = min(self._win)
            hi = max(self._win)
            rng = hi - lo
            if rng < NORM_RANGE_EPS:
                out[i] = 0.5
            else:
                out[i] = min(1.0, max(0.0, (v - lo) / rng))
        return out


def normalize(stream: Sequence[float], sample_rate_hz: float,
              window_s: float = NORM_WINDOW_S) -> np.ndarray:
    """Whole-array form of SlidingNormalizer, vectorized.

    Identical output to the streaming class: a trailing min-max window
    is emulated by padding the start with the first sample.
    """
    x = np.asarray(stream, dtype=np.float64)
    if len(x) == 0:
        return x.copy()
    w = int(round(window_s * sample_rate_hz))
    if w < 1:
        raise ValueError("window must span at least one sample")
    if len(x) == 1:
        padded = x
    else:
        padded = np.concatenate([np.full(min(w, len(x)) - 1, x[0]), x])
    wins = np.lib.stride_tricks.sliding_window_view(padded, min(w, len(x)))
    lo = wins.min(axis=1)
    hi = wins.max(axis=1)
    rng = hi - lo
    out = np.where(rng < NORM_RANGE_EPS, 0.5,
                   np.clip((x - lo) / np.where(rng < NORM_RANGE_EPS, 1.0, rng), 0.0, 1.0))
    return out


# -- resampling ------------------------------------------------------------


class StreamResampler:
    """Linear-interpolation resampler between uniform rates.

    Emits target-grid samples as soon as both bracketing source
    samples have arrived; flush() emits any grid point living exactly
    on the final source sample. Never extrapolates.
    """

    def __init__(self, source_hz: float, target_hz: float):
        if source_hz <= 0 or target_hz <= 0:
            raise ValueError("rates must be positive")
        self.source_hz = source_hz
        self.target_hz = target_hz
        # single precomputed ratio so pos = k * ratio is the exact same
        # IEEE expression the whole-array form evaluates
        self._ratio = source_hz / target_hz
        self._x: list[float] = []  # retained tail: last two samples suffice
        self._n_in = 0
        self._k = 0

    def _value_at(self, k: int) -> float:
        pos = k * self._ratio
        i = min(int(math.floor(pos + 1e-9)), self._n_in - 2)
        u = pos - i
        if u < 0:
            u = 0.0
        x0 = self._x[i - self._base]
        x1 = self._x[i + 1 - self._base]
        return x0 + (x1 - x0) * u

    @property
    def _base(self) -> int:
        return self._n_in - len(self._x)

    def push(self, chunk: Sequence[float]) -> np.ndarray:
        outs = []
        for v in np.asarray(chunk, dtype=np.float64):
            self._x.append(float(v))
            self._n_in += 1
            if self._n_in < 2:
                continue
            # grid points strictly inside the newest source interval,
            # plus its left endpoint
            while True:
                pos = self._k * self._ratio
                if pos >= self._n_in - 1 - 1e-9:
                    break
                outs.append(self._value_at(self._k))
                self._k += 1
            if len(self._x) > 2:
                del self._x[:len(self._x) - 2]
        return np.asarray(outs)

    def flush(self) -> np.ndarray:
        outs = []
        if self._n_in == 1:
            if self._k == 0:
                outs.append(self._x[0])
                self._k += 1
        elif self._n_in >= 2:
            pos = self._k * self._ratio
            if abs(pos - (self._n_in - 1)) <= 1e-9:
                outs.append(self._value_at(self._k))
                self._k += 1
        return np.asarray(outs)


def resample(stream: Sequence[float], source_hz: float, target_hz: float) -> np.ndarray:
    """Resample a whole array onto the target grid, no extrapolation."""
    x = np.asarray(stream, dtype=np.float64)
    if len(x) == 0:
        return x.copy()
    if len(x) == 1:
        return x.copy()
    span = (len(x) - 1) / source_hz
    n_out = int(math.floor(span * target_hz + 1e-9)) + 1
    pos = np.arange(n_out) * (source_hz / target_hz)
    i = np.minimum(np.floor(pos + 1e-9).astype(int), len(x) - 2)
    u = pos - i
    u[u < 0] = 0.0
    return x[i] + (x[i + 1] - x[i]) * u


# -- peaks -----------------------------------------------------------------


@dataclass(frozen=True)
class PeakList:
    """Alternating breathing extrema, times in seconds.

    Invariants: times strictly increase and peaks/troughs alternate
    when merged into one timeline.
    """

    peak_times: np.ndarray
    peak_values: np.ndarray
    trough_times: np.ndarray
    trough_values: np.ndarray

    def merged(self) -> list[tuple[float, float, str]]:
        items = [(t, v, "peak") for t, v in zip(self.peak_times, self.peak_values)]
        items += [(t, v, "trough") for t, v in zip(self.trough_times, self.trough_values)]
        return sorted(items)


def _candidate_extrema(y: np.ndarray) -> list[tuple[int, str]]:
    """Indices where the smoothed first difference changes sign."""
    d = np.diff(y)
    cands = []
    prev_sign = 0
    for j in range(len(d)):
        s = 0 if d[j] == 0 else (1 if d[j] > 0 else -1)
        if s == 0:
            continue
        if prev_sign > 0 and s < 0:
            cands.append((j, "peak"))
        elif prev_sign < 0 and s > 0:
            cands.append((j, "trough"))
        prev_sign = s
    return cands


def _alternate(items: list[tuple[int, float, str]]) -> list[tuple[int, float, str]]:
    """Collapse same-kind runs, keeping the most extreme member."""
    out: list[tuple[int, float, str]] = []
    for idx, val, kind in items:
        if out and out[-1][2] == kind:
            keep_new = val > out[-1][1] if kind == "peak" else val < out[-1][1]
            if keep_new:
                out[-1] = (idx, val, kind)
        elif out and out[-1][0] == idx:
            continue
        else:
            out.append((idx, val, kind))
    return out


def detect_peaks(stream: Sequence[float], sample_rate_hz: float) -> PeakList:
    """Find breathing peaks and troughs in a slow oscillating stream.

    Pipeline: 0.1 Hz high-pass (order 3) to kill drift, 0.5 s moving
    average to kill jitter, then sign changes of the first difference
    mark candidate extrema. Candidates are pruned by a minimum
    prominence of 10% of the stream's interquartile range and a minimum
    inter-peak spacing of 1.0 s, and peak/trough alternation is
    enforced throughout. Reported values are the input stream's at the
    detected times; the causal filtering leads slow cycles a little, so
    consumers measuring amplitudes re-anchor on their own stream.

    Raises NoPeaks when fewer than two peaks survive, i.e. the stream
    holds less than one full breathing cycle.
    """
    x = np.asarray(stream, dtype=np.float64)
    if len(x) < 3:
        raise NoPeaks("stream too short")
    if np.ptp(x) == 0.0:
        raise NoPeaks("constant stream has no breathing cycles")

    hp = filter_stream(x, FilterSpec("highpass", HIGHPASS_CUTOFF_HZ,
                                     HIGHPASS_ORDER, sample_rate_hz))
    y = moving_average(hp, sample_rate_hz, MA_WINDOW_S)

    # candidates are extrema of y, so all extremeness comparisons happen
    # on y; the input stream only sets the prominence scale and the
    # reported values
    items: list[tuple[int, float, str]] = []
    for idx, kind in _candidate_extrema(y):
        items.append((idx, float(y[idx]), kind))
    items.sort(key=lambda it: it[0])
    items = _alternate(items)

    q1, q3 = np.percentile(x, [25, 75])
    min_prom = PROMINENCE_IQR_FRAC * (q3 - q1)

    # Drop the weakest adjacent peak/trough pair until all swings are
    # significant, re-collapsing the same-kind neighbors this exposes.
    while len(items) >= 2:
        diffs = [abs(items[i + 1][1] - items[i][1]) for i in range(len(items) - 1)]
        j = int(np.argmin(diffs))
        if diffs[j] >= min_prom:
            break
        del items[j:j + 2]
        items = _alternate(items)

    # Enforce minimum spacing between same-kind extrema.
    min_gap = MIN_PEAK_SPACING_S * sample_rate_hz
    changed = True
    while changed:
        changed = False
        for i in range(len(items) - 2):
            a, b, c = items[i], items[i + 1], items[i + 2]
            if a[2] == c[2] and (c[0] - a[0]) < min_gap:
                weaker = i if (a[1] < c[1]) == (a[2] == "peak") else i + 2
                drop = sorted({weaker, i + 1})
                for d in reversed(drop):
                    del items[d]
                items = _alternate(items)
                changed = True
                break

    peaks = [i for i, _, k in items if k == "peak"]
    troughs = [i for i, _, k in items if k == "trough"]
    if len(peaks) < 2:
        raise NoPeaks(f"found {len(peaks)} peak(s), need a full cycle")

    return PeakList(
        peak_times=np.array([i / sample_rate_hz for i in peaks]),
        peak_values=x[peaks].copy(),
        trough_times=np.array([i / sample_rate_hz for i in troughs]),
        trough_values=x[troughs].copy(),
    )


# -- correlation -----------------------------------------------------------


def pearson_r(a: Sequence[float], b: Sequence[float]) -> float:
    """Pearson correlation; raises DegenerateSeries on constant input."""
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if len(x) != len(y):
        raise ValueError(f"length mismatch: {len(x)} vs {len(y)}")
    if len(x) < 3:
        raise ValueError("need at least 3 samples")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = float(np.sqrt((dx * dx).sum()))
    sy = float(np.sqrt((dy * dy).sum()))
    if sx == 0.0 or sy == 0.0:
        raise DegenerateSeries("correlation of a constant series is undefined")
    return float((dx * dy).sum() / (sx * sy))


def validate_preprocess(stream: Sequence[float], sample_rate_hz: float) -> np.ndarray:
    """Band-pass 0.1-1 Hz (order 3 per edge) then 0.5 s moving average."""
    bp = filter_stream(stream, FilterSpec("bandpass", BAND_HZ, 3, sample_rate_hz))
    return moving_average(bp, sample_rate_hz, MA_WINDOW_S)


def validate_against_reference(stream: Sequence[float], reference: Sequence[float],
                               sample_rate_hz: float) -> float:
    """Shape agreement of two same-rate streams, scale-free.

    Both sides get the same band-pass + moving-average treatment, then
    plain Pearson correlation. Streams are truncated to the shorter
    length if they differ.
    """
    n = min(len(stream), len(reference))
    if n < 3:
        raise InsufficientData("streams too short to compare")
    a = np.asarray(stream, dtype=np.float64)[:n]
    b = np.asarray(reference, dtype=np.float64)[:n]
    # a flat signal carries no shape; filter startup transients would
    # otherwise manufacture a bogus correlation from it
    if np.ptp(a) == 0.0 or np.ptp(b) == 0.0:
        raise DegenerateSeries("constant stream has no shape to compare")
    return pearson_r(validate_preprocess(a, sample_rate_hz),
                     validate_preprocess(b, sample_rate_hz))


def best_lag_correlation(reference: Sequence[float], stream: Sequence[float],
                         sample_rate_hz: float, max_lag_s: float = 2.0,
                         preprocess: bool = True) -> tuple[float, float]:
    """Max Pearson correlation over integer-sample lags within +-max_lag_s.

    Positive lag means the stream trails the reference. Ties prefer
    the smallest |lag|, so an exact copy reports lag 0. Returns
    (r, lag_s).
    """
    a = np.asarray(reference, dtype=np.float64)
    b = np.asarray(stream, dtype=np.float64)
    n = min(len(a), len(b))
    a, b = a[:n], b[:n]
    if np.ptp(a) == 0.0 or np.ptp(b) == 0.0:
        raise DegenerateSeries("constant stream has no shape to compare")
    if preprocess:
        a = validate_preprocess(a, sample_rate_hz)
        b = validate_preprocess(b, sample_rate_hz)
    max_lag = int(round(max_lag_s * sample_rate_hz))
    if n - max_lag < 3:
        raise InsufficientData("streams too short for the lag window")

    best_r = -2.0
    best_lag = 0
    lags = sorted(range(-max_lag, max_lag + 1), key=abs)
    for lag in lags:
        if lag >= 0:
            ra, rb = a[:n - lag], b[lag:]
        else:
            ra, rb = a[-lag:], b[:n + lag]
        try:
            r = pearson_r(ra, rb)
        except DegenerateSeries:
            continue
        if r > best_r:
            best_r = r
            best_lag = lag
    if best_r < -1.5:
        raise DegenerateSeries("no lag produced a defined correlation")
    return best_r, best_lag / sample_rate_hz


# -- belt reference model --------------------------------------------------


def simulate_belt(stream: Sequence[float], sample_rate_hz: float) -> np.ndarray:
    """What a stretch-sensor belt would report for a breathing signal.

    First-order lag toward the input, fast when stretching
    (tau 0.1 s) and slow when relaxing (tau 0.8 s, rubber creeps
    back), then a mild saturation y / (1 + 0.3 y). Starts relaxed at 0.
    """
    x = np.asarray(stream, dtype=np.float64)
    dt = 1.0 / sample_rate_hz
    a_rise = 1.0 - math.exp(-dt / BELT_TAU_RISE_S)
    a_fall = 1.0 - math.exp(-dt / BELT_TAU_FALL_S)
    out = np.empty_like(x)
    y = 0.0
    for i, target in enumerate(x):
        alpha = a_rise if target > y else a_fall
        y += alpha * (target - y)
        out[i] = y / (1.0 + BELT_SATURATION * y)
    return out
