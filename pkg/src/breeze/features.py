"""Per-cycle breathing features measured between detected extrema.

Works on any [0, 1] breathing stream plus a PeakList. Peak times are
taken as approximate and re-anchored on the given stream, so the same
PeakList can score either the stream it was detected on or a cleaner
time-aligned version of it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dsp import PeakList
from .errors import InsufficientCycles

# A sample belongs to a hold when the local slope stays below this
# fraction of the signal range per second.
HOLD_SLOPE_FRAC = 0.02


@dataclass(frozen=True)
class BreathFeatures:
    pace_bpm: float           # 60 / mean peak-to-peak interval
    inout_diff_s: float       # mean exhale minus mean inhale duration
    hold_in_s: float          # mean flat span around peaks
    hold_out_s: float         # mean flat span around troughs
    amplitude_mean: float     # mean peak minus preceding trough
    cycle_variability: float  # CV of cycle durations


def _anchor(x: np.ndarray, cands: list[tuple[int, str]]) -> list[tuple[int, str]]:
    """Re-anchor approximate alternating extrema on this stream.

    Causal filtering ahead of peak detection leads slow cycles by up to
    nearly half a cycle, beyond any fixed search window. The detected
    ordering still brackets each true extremum, so every candidate is
    re-found as the arg-extremum of the stream between its two
    neighboring candidates (stream edges at the ends). Plateaus anchor
    at their first sample.
    """
    n = len(x)
    out = []
    for j, (idx, kind) in enumerate(cands):
        lo = cands[j - 1][0] + 1 if j > 0 else 0
        hi = cands[j + 1][0] if j + 1 < len(cands) else n
        if hi <= lo:
            lo, hi = max(0, idx - 1), min(n, idx + 2)
        seg = x[lo:hi]
        best = seg.max() if kind == "peak" else seg.min()
        # plateaus tie exactly; take the tied sample nearest the
        # candidate so a window spanning two cycles picks its own
        ties = np.flatnonzero(seg == best)
        off = int(ties[np.argmin(np.abs(ties + lo - idx))])
        out.append((lo + off, kind))
    out.sort()
    # stream-edge artifacts in the detection domain can anchor onto a
    # slope sample past the true last extremum; restore alternation by
    # keeping the more extreme of same-kind neighbors
    collapsed: list[tuple[int, str]] = []
    for idx, kind in out:
        if collapsed and collapsed[-1][1] == kind:
            prev = collapsed[-1][0]
            better = x[idx] > x[prev] if kind == "peak" else x[idx] < x[prev]
            if better:
                collapsed[-1] = (idx, kind)
        elif collapsed and collapsed[-1][0] == idx:
            continue
        else:
            collapsed.append((idx, kind))
    return collapsed


def _hold_span(x: np.ndarray, p: int, slope_thresh: float, rate: float) -> tuple[int, int]:
    """Contiguous low-slope run of samples around index p."""
    l = p
    while l > 0 and abs(x[l] - x[l - 1]) * rate <= slope_thresh:
        l -= 1
    r = p
    while r < len(x) - 1 and abs(x[r + 1] - x[r]) * rate <= slope_thresh:
        r += 1
    return l, r


def features_from_signal(stream: Sequence[float], sample_rate_hz: float,
                         peaks: PeakList) -> BreathFeatures:
    """Measure pace, balance, holds, depth and variability.

    Holds are the flat spans around each extremum (slope below 2% of
    the signal range per second); inhale and exhale durations run
    between hold boundaries so plateaus are not counted as breathing
    movement. Raises InsufficientCycles with fewer than two peaks.
    """
    x = np.asarray(stream, dtype=np.float64)
    if len(peaks.peak_times) < 2:
        raise InsufficientCycles("need at least two peaks")

    cands = []
    for t, kind in ([(t, "peak") for t in peaks.peak_times]
                    + [(t, "trough") for t in peaks.trough_times]):
        idx = int(round(t * sample_rate_hz))
        cands.append((min(max(idx, 0), len(x) - 1), kind))
    cands.sort()
    items = _anchor(x, cands)

    rng = float(x.max() - x.min())
    slope_thresh = HOLD_SLOPE_FRAC * rng * 1.0  # per second
    spans = {i: _hold_span(x, i, slope_thresh, sample_rate_hz) for i, _ in items}

    peak_idx = [i for i, k in items if k == "peak"]
    if len(peak_idx) < 2:
        raise InsufficientCycles("need at least two peaks")

    intervals = np.diff(peak_idx) / sample_rate_hz
    pace = 60.0 / float(intervals.mean())
    variability = float(intervals.std() / intervals.mean()) if intervals.mean() > 0 else 0.0

    hold_in = [(spans[i][1] - spans[i][0]) / sample_rate_hz for i, k in items if k == "peak"]
    hold_out = [(spans[i][1] - spans[i][0]) / sample_rate_hz for i, k in items if k == "trough"]

    inhales, exhales, amplitudes = [], [], []
    for (i0, k0), (i1, k1) in zip(items, items[1:]):
        if k0 == k1:
            continue
        gap = max(0.0, (spans[i1][0] - spans[i0][1]) / sample_rate_hz)
        if k0 == "trough":  # rising side
            inhales.append(gap)
            amplitudes.append(float(x[i1] - x[i0]))
        else:
            exhales.append(gap)

    inout = (float(np.mean(exhales)) if exhales else 0.0) \
        - (float(np.mean(inhales)) if inhales else 0.0)
    amplitude = float(np.clip(np.mean(amplitudes), 0.0, 1.0)) if amplitudes else 0.0

    return BreathFeatures(
        pace_bpm=pace,
        inout_diff_s=inout,
        hold_in_s=float(np.mean(hold_in)) if hold_in else 0.0,
        hold_out_s=float(np.mean(hold_out)) if hold_out else 0.0,
        amplitude_mean=amplitude,
        cycle_variability=variability,
    )
