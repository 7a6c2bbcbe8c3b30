"""Breathing pattern lexicon and waveform synthesis.

A breathing pattern is described by a small set of orthogonal traits
(pace, inhale/exhale balance, holds, depth, variability) that compose
into a PatternSpec. Specs render to guide waveforms in [0, 1]: a
raised-cosine rise over the inhale, an optional plateau at the target
amplitude, a raised-cosine fall over the exhale, and an optional
plateau at zero.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConflictingTraits, InvalidSpec

BASE_PACE_BPM = 15.0
BASE_AMPLITUDE = 0.6
MIN_SAMPLE_RATE_HZ = 8.0

# Guard rails for per-cycle perturbation. The inhale share of the
# breathing time stays inside these bounds no matter how hard the
# variability trait pushes.
_SPLIT_FRAC_MIN = 0.1
_SPLIT_FRAC_MAX = 0.9


class TraitId(enum.Enum):
    BASELINE = "Baseline"
    FAST = "Fast"
    SLOW = "Slow"
    PLUS = "Plus"
    MINUS = "Minus"
    HOLD_IN = "HoldIn"
    HOLD_OUT = "HoldOut"
    DEEP = "Deep"
    SHALLOW = "Shallow"
    VARIABLE = "Variable"


TRAIT_BY_NAME = {t.value: t for t in TraitId}

# Parameter axes. Two traits on the same axis cannot be composed.
_AXES = {
    "pace": {TraitId.FAST, TraitId.SLOW},
    "balance": {TraitId.PLUS, TraitId.MINUS},
    "hold": {TraitId.HOLD_IN, TraitId.HOLD_OUT},
    "depth": {TraitId.DEEP, TraitId.SHALLOW},
}

# Each delta is a partial parameter update applied on top of the
# baseline. inout_diff_s is the target (exhale - inhale) in seconds;
# the breathing time 60/pace is redistributed to honor it, so Plus and
# Minus shift half a second each way instead of stretching the cycle.
_DELTAS: Mapping[TraitId, Mapping[str, float]] = {
    TraitId.BASELINE: {},
    TraitId.FAST: {"pace_bpm": 30.0},
    TraitId.SLOW: {"pace_bpm": 7.5},
    TraitId.PLUS: {"inout_diff_s": 1.0},
    TraitId.MINUS: {"inout_diff_s": -1.0},
    TraitId.HOLD_IN: {"hold_in_s": 2.0},
    TraitId.HOLD_OUT: {"hold_out_s": 2.0},
    TraitId.DEEP: {"amplitude": 1.0},
    TraitId.SHALLOW: {"amplitude": 0.2},
    TraitId.VARIABLE: {"variability_frac": 0.5},
}

_BASELINE_PARAMS = {
    "pace_bpm": BASE_PACE_BPM,
    "inout_diff_s": 0.0,
    "hold_in_s": 0.0,
    "hold_out_s": 0.0,
    "amplitude": BASE_AMPLITUDE,
    "variability_frac": 0.0,
}

# Canonical session lexicon, in presentation order.
CANONICAL_TRAIT_SETS: tuple[frozenset[TraitId], ...] = (
    frozenset({TraitId.BASELINE}),
    frozenset({TraitId.FAST}),
    frozenset({TraitId.SLOW}),
    frozenset({TraitId.PLUS}),
    frozenset({TraitId.MINUS}),
    frozenset({TraitId.SLOW, TraitId.HOLD_IN}),
    frozenset({TraitId.SLOW, TraitId.HOLD_OUT}),
    frozenset({TraitId.FAST, TraitId.DEEP}),
    frozenset({TraitId.FAST, TraitId.SHALLOW}),
    frozenset({TraitId.VARIABLE}),
)


@dataclass(frozen=True)
class PatternSpec:
    """Resolved breathing pattern parameters.

    inhale_s + exhale_s always equals 60 / pace_bpm; holds extend the
    cycle beyond that, so patterns with holds complete fewer cycles
    per minute than pace_bpm suggests.
    """

    pace_bpm: float
    inhale_s: float
    exhale_s: float
    hold_in_s: float = 0.0
    hold_out_s: float = 0.0
    amplitude: float = BASE_AMPLITUDE
    variability_frac: float = 0.0

    @property
    def cycle_s(self) -> float:
        """Full cycle duration including holds."""
        return self.inhale_s + self.hold_in_s + self.exhale_s + self.hold_out_s

    def validate(self) -> "PatternSpec":
        if not (self.pace_bpm > 0):
            raise InvalidSpec(f"pace_bpm must be positive, got {self.pace_bpm}")
        for name in ("inhale_s", "exhale_s", "hold_in_s", "hold_out_s"):
            if getattr(self, name) < 0:
                raise InvalidSpec(f"{name} must be >= 0")
        if not (0.0 <= self.amplitude <= 1.0):
            raise InvalidSpec(f"amplitude must be in [0, 1], got {self.amplitude}")
        if not (0.0 <= self.variability_frac <= 1.0):
            raise InvalidSpec(
                f"variability_frac must be in [0, 1], got {self.variability_frac}"
            )
        if abs(self.inhale_s + self.exhale_s - 60.0 / self.pace_bpm) > 1e-9:
            raise InvalidSpec(
                "inhale_s + exhale_s must equal 60 / pace_bpm "
                f"({self.inhale_s + self.exhale_s} != {60.0 / self.pace_bpm})"
            )
        return self


def trait_delta(trait: TraitId) -> dict[str, float]:
    """Partial parameter update contributed by one trait.

    Baseline returns the full baseline parameter set; every other trait
    touches exactly one axis.
    """
    if trait is TraitId.BASELINE:
        return dict(_BASELINE_PARAMS)
    return dict(_DELTAS[trait])


def compose(traits: Iterable[TraitId]) -> PatternSpec:
    """Merge trait deltas over the baseline into a PatternSpec.

    Order-independent. Raises ConflictingTraits if two traits set the
    same axis (Fast+Slow, Plus+Minus, HoldIn+HoldOut, Deep+Shallow).
    """
    chosen = set(traits)
    for axis, members in _AXES.items():
        both = chosen & members
        if len(both) > 1:
            names = " and ".join(sorted(t.value for t in both))
            raise ConflictingTraits(f"{names} both set the {axis} axis")

    params = dict(_BASELINE_PARAMS)
    for trait in chosen:
        params.update(_DELTAS[trait])

    breathing_s = 60.0 / params["pace_bpm"]
    diff = params.pop("inout_diff_s")
    if abs(diff) >= breathing_s:
        raise InvalidSpec(
            f"inhale/exhale difference {diff} s does not fit in a "
            f"{breathing_s} s breathing period"
        )
    inhale = (breathing_s - diff) / 2.0
    exhale = (breathing_s + diff) / 2.0
    return PatternSpec(
        pace_bpm=params["pace_bpm"],
        inhale_s=inhale,
        exhale_s=exhale,
        hold_in_s=params["hold_in_s"],
        hold_out_s=params["hold_out_s"],
        amplitude=params["amplitude"],
        variability_frac=params["variability_frac"],
    ).validate()


def canonical_patterns() -> list[PatternSpec]:
    """The ten session patterns, in canonical order."""
    return [compose(traits) for traits in CANONICAL_TRAIT_SETS]


def canonical_name(traits: frozenset[TraitId]) -> str:
    order = {t: i for i, t in enumerate(TraitId)}
    return "+".join(t.value for t in sorted(traits, key=order.get))


def canonical_names() -> list[str]:
    return [canonical_name(traits) for traits in CANONICAL_TRAIT_SETS]


def parse_traits(text: str) -> frozenset[TraitId]:
    """Parse 'Slow+HoldIn' or 'Fast,Deep' into a trait set."""
    parts = [p.strip() for p in text.replace(",", "+").split("+") if p.strip()]
    if not parts:
        raise InvalidSpec("empty pattern name")
    traits = set()
    for part in parts:
        try:
            traits.add(TRAIT_BY_NAME[part])
        except KeyError:
            known = ", ".join(t.value for t in TraitId)
            raise InvalidSpec(f"unknown trait {part!r} (known: {known})") from None
    return frozenset(traits)


@dataclass(frozen=True)
class BreathWaveform:
    """A synthesized guide signal plus cycle bookkeeping."""

    sample_rate_hz: float
    samples: np.ndarray
    cycle_marks: np.ndarray  # sample index where each cycle starts

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz

    def times(self) -> np.ndarray:
        return np.arange(len(self.samples)) / self.sample_rate_hz


def _segment_values(tau: np.ndarray, inhale: float, hold_in: float,
                    exhale: float, amp: float) -> np.ndarray:
    """Evaluate one cycle at offsets tau from the cycle start."""
    out = np.zeros_like(tau)
    t1 = inhale
    t2 = inhale + hold_in
    t3 = inhale + hold_in + exhale

    rising = tau < t1
    if inhale > 0:
        out[rising] = amp * 0.5 * (1.0 - np.cos(np.pi * tau[rising] / inhale))
    else:
        out[rising] = amp

    held = (tau >= t1) & (tau < t2)
    out[held] = amp

    falling = (tau >= t2) & (tau < t3)
    if exhale > 0:
        out[falling] = amp * 0.5 * (1.0 + np.cos(np.pi * (tau[falling] - t2) / exhale))
    else:
        out[falling] = 0.0

    # beyond t3: exhale hold, stays 0
    return out


def _perturbed_cycle(spec: PatternSpec, rng: np.random.Generator):
    """Draw one cycle's parameters under the variability trait.

    The perturbation multiplies the breathing period, the inhale share
    of it, the amplitude, and any nonzero holds by independent factors
    uniform in [1 - v, 1 + v], then clamps to physical ranges. Scaling
    the period (not the bpm figure) keeps every cycle duration within
    [1-v, 1+v] times the nominal one.
    """
    v = spec.variability_frac
    breathing = spec.inhale_s + spec.exhale_s
    if v <= 0:
        return spec.inhale_s, spec.hold_in_s, spec.exhale_s, spec.hold_out_s, spec.amplitude
    f_period, f_split, f_amp, f_hin, f_hout = rng.uniform(1.0 - v, 1.0 + v, 5)
    breathing_k = breathing * f_period
    frac = spec.inhale_s / breathing
    frac_k = min(max(frac * f_split, _SPLIT_FRAC_MIN), _SPLIT_FRAC_MAX)
    inhale = breathing_k * frac_k
    exhale = breathing_k - inhale
    amp = min(max(spec.amplitude * f_amp, 0.0), 1.0)
    hold_in = spec.hold_in_s * f_hin
    hold_out = spec.hold_out_s * f_hout
    return inhale, hold_in, exhale, hold_out, amp


def synthesize(spec: PatternSpec, duration_s: float, sample_rate_hz: float,
               seed: int = 0) -> BreathWaveform:
    """Render a pattern to a [0, 1] guide waveform.

    Cycles are generated back to back until duration_s is covered; the
    last cycle may be cut off. Deterministic for a given seed. The
    sample rate must be at least 8 Hz so the fastest patterns stay
    comfortably oversampled.
    """
    spec.validate()
    if sample_rate_hz < MIN_SAMPLE_RATE_HZ:
        raise InvalidSpec(f"sample_rate_hz must be >= {MIN_SAMPLE_RATE_HZ}")
    if duration_s <= 0:
        raise InvalidSpec("duration_s must be positive")

    n = int(round(duration_s * sample_rate_hz))
    samples = np.zeros(n, dtype=np.float64)
    marks: list[int] = []
    rng = np.random.default_rng(seed)

    t_start = 0.0
    while True:
        i0 = int(math.ceil(t_start * sample_rate_hz - 1e-9))
        if i0 >= n:
            break
        inhale, hold_in, exhale, hold_out, amp = _perturbed_cycle(spec, rng)
        cycle = inhale + hold_in + exhale + hold_out
        marks.append(i0)
        i1 = min(n, int(math.ceil((t_start + cycle) * sample_rate_hz - 1e-9)))
        idx = np.arange(i0, i1)
        tau = idx / sample_rate_hz - t_start
        samples[idx] = _segment_values(tau, inhale, hold_in, exhale, amp)
        t_start += cycle

    return BreathWaveform(
        sample_rate_hz=float(sample_rate_hz),
        samples=samples,
        cycle_marks=np.asarray(marks, dtype=np.int64),
    )


def scaled(spec: PatternSpec, amplitude: float) -> PatternSpec:
    """Same pattern at a different depth."""
    if not (0.0 <= amplitude <= 1.0):
        raise InvalidSpec(f"amplitude must be in [0, 1], got {amplitude}")
    return replace(spec, amplitude=amplitude)
