import numpy as np
import pytest

from breeze import CANONICAL_TRAIT_SETS, TraitId, canonical_name, compose, synthesize

NON_VARIABLE = [ts for ts in CANONICAL_TRAIT_SETS if TraitId.VARIABLE not in ts]


def synth(traits, duration_s=60.0, rate=24.0, seed=0):
    return synthesize(compose(traits), duration_s, rate, seed=seed)


@pytest.fixture(scope="session")
def baseline_wave():
    """60 s Baseline at 24 Hz, shared by the slower pipeline tests."""
    return synth({TraitId.BASELINE})
