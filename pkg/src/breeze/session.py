"""Mimicry sessions: schedules of (pattern, modality) trials and scoring.

A full session presents every canonical pattern through every feedback
modality once, in seeded-shuffle order. Scoring compares an input
breathing stream to the freshly synthesized target over a bounded lag
window, since every real pipeline (and human) trails the guide a bit.
"""

from __future__ import annotations

import enum
import json
import random
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import dsp, patterns
from .errors import InsufficientData, NoPeaks
from .features import BreathFeatures, features_from_signal

TRIAL_DURATION_S = 40.0
MAX_LAG_S = 2.0


class Modality(enum.Enum):
    VISUAL = "visual"
    AUDIO = "audio"
    HAPTIC = "haptic"


@dataclass(frozen=True)
class TrialSpec:
    index: int
    traits: frozenset[patterns.TraitId]
    pattern: patterns.PatternSpec
    modality: Modality

    @property
    def pattern_name(self) -> str:
        return patterns.canonical_name(self.traits)


def build_schedule(seed: int) -> list[TrialSpec]:
    """All 30 pattern x modality pairs, Fisher-Yates shuffled by seed."""
    pairs = [(traits, m) for traits in patterns.CANONICAL_TRAIT_SETS
             for m in Modality]
    rng = random.Random(seed)
    for i in range(len(pairs) - 1, 0, -1):
        j = rng.randrange(i + 1)
        pairs[i], pairs[j] = pairs[j], pairs[i]
    return [TrialSpec(index=i, traits=traits, pattern=patterns.compose(traits),
                      modality=m)
            for i, (traits, m) in enumerate(pairs)]


@dataclass(frozen=True)
class TrialResult:
    r: float
    lag_s: float
    pace_delta_bpm: Optional[float]
    input_features: Optional[BreathFeatures]
    target_features: Optional[BreathFeatures]
    duration_s: float

    def to_dict(self) -> dict:
        def feat(f):
            return None if f is None else vars(f)
        return {
            "r": self.r,
            "lag_s": self.lag_s,
            "pace_delta_bpm": self.pace_delta_bpm,
            "input_features": feat(self.input_features),
            "target_features": feat(self.target_features),
            "duration_s": self.duration_s,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _safe_features(stream: np.ndarray, rate: float) -> Optional[BreathFeatures]:
    try:
        pl = dsp.detect_peaks(stream, rate)
        return features_from_signal(stream, rate, pl)
    except NoPeaks:
        return None


def run_trial(target: patterns.PatternSpec, input_stream: Sequence[float],
              sample_rate_hz: float, duration_s: float = TRIAL_DURATION_S,
              seed: int = 0) -> TrialResult:
    """Score an input stream against a target pattern.

    The target is synthesized at the input's rate and the correlation
    is the max over integer-sample lags within +-2 s, both sides put
    through the validation band-pass + smoothing first. The input must
    be at least 8 Hz and cover duration_s.
    """
    if sample_rate_hz < patterns.MIN_SAMPLE_RATE_HZ:
        raise InsufficientData(f"input rate must be >= {patterns.MIN_SAMPLE_RATE_HZ} Hz")
    x = np.asarray(input_stream, dtype=np.float64)
    n = int(round(duration_s * sample_rate_hz))
    if len(x) < n:
        raise InsufficientData(f"need {n} samples for a {duration_s} s trial, got {len(x)}")
    x = x[:n]

    wf = patterns.synthesize(target, duration_s, sample_rate_hz, seed=seed)
    r, lag_s = dsp.best_lag_correlation(wf.samples, x, sample_rate_hz,
                                        max_lag_s=MAX_LAG_S)

    f_in = _safe_features(x, sample_rate_hz)
    f_target = _safe_features(wf.samples, sample_rate_hz)
    pace_delta = None
    if f_in is not None and f_target is not None:
        pace_delta = f_in.pace_bpm - f_target.pace_bpm

    return TrialResult(r=r, lag_s=lag_s, pace_delta_bpm=pace_delta,
                       input_features=f_in, target_features=f_target,
                       duration_s=duration_s)
