"""Breathing biofeedback toolkit.

Synthesizes guide breathing patterns, recovers breathing from IMU
pendant motion, extracts per-breath features, and streams live modality
feedback (light, sound, vibration) over a small binary protocol with a
WebSocket JSON mirror.
"""

from .errors import (BadMagic, BreezeError, ConflictingTraits,
                     DegenerateSample, DegenerateSeries, HandshakeTimeout,
                     InsufficientCycles, InsufficientData, InvalidSpec,
                     NoPeaks, OutOfRange, PayloadTooLarge, ProtocolViolation,
                     Truncated, UnknownType, WireError)
from .patterns import (BASE_AMPLITUDE, BASE_PACE_BPM, CANONICAL_TRAIT_SETS,
                       BreathWaveform, PatternSpec, TraitId,
                       canonical_name, canonical_names, canonical_patterns,
                       compose, parse_traits, synthesize, trait_delta)
from .imu import (FusionState, IMUSample, Quaternion, fuse_step, fuse_stream,
                  pitch_of, simulate_imu)
from .dsp import (FilterSpec, PeakList, SOSFilter, best_lag_correlation,
                  design_butterworth, detect_peaks, extract_breathing,
                  filter_stream, moving_average, normalize, pearson_r,
                  resample, simulate_belt, validate_against_reference)
from .features import BreathFeatures, features_from_signal
from .encoders import (ModalityFrame, audio_gain, encode_modalities,
                       gain_modulated_noise, haptic_intensity, loudness_db,
                       pink_noise, visual_brightness, write_wav)
from .session import (Modality, TrialResult, TrialSpec, build_schedule,
                      run_trial)
from .wire import (Frame, FrameReader, WireConfig, decode_frame, encode_frame,
                   run_pair_session, run_receiver, run_sender)

__version__ = "0.1.0"

__all__ = [
    "BreezeError", "ConflictingTraits", "InvalidSpec", "DegenerateSample",
    "InsufficientData", "NoPeaks", "DegenerateSeries", "InsufficientCycles",
    "OutOfRange", "WireError", "BadMagic", "UnknownType", "Truncated",
    "PayloadTooLarge", "HandshakeTimeout", "ProtocolViolation",
    "TraitId", "PatternSpec", "BreathWaveform", "compose", "trait_delta",
    "synthesize", "canonical_patterns", "canonical_name", "canonical_names",
    "parse_traits", "CANONICAL_TRAIT_SETS", "BASE_PACE_BPM", "BASE_AMPLITUDE",
    "Quaternion", "IMUSample", "FusionState", "fuse_step", "fuse_stream",
    "pitch_of", "simulate_imu",
    "FilterSpec", "SOSFilter", "design_butterworth", "filter_stream",
    "moving_average", "extract_breathing", "normalize", "resample",
    "PeakList", "detect_peaks", "pearson_r", "validate_against_reference",
    "best_lag_correlation", "simulate_belt",
    "BreathFeatures", "features_from_signal",
    "ModalityFrame", "visual_brightness", "loudness_db", "audio_gain",
    "haptic_intensity", "encode_modalities", "pink_noise",
    "gain_modulated_noise", "write_wav",
    "Modality", "TrialSpec", "TrialResult", "build_schedule", "run_trial",
    "Frame", "FrameReader", "WireConfig", "encode_frame", "decode_frame",
    "run_sender", "run_receiver", "run_pair_session",
]
