"""Shared fixtures: small devices reused across the suite.

Session scope keeps Hamiltonian assembly out of individual test timings;
everything here is deterministic, so sharing is safe.
"""

import warnings

import numpy as np
import pytest

from stepgnr.geometry import (
    RibbonSpec,
    apply_step_deformation,
    build_flat_ribbon,
    resolve_profile,
)
from stepgnr.model import HoppingModel, assemble


@pytest.fixture(scope="session")
def model():
    return HoppingModel()


@pytest.fixture(scope="session")
def flat7():
    return build_flat_ribbon(RibbonSpec(7, 8, 1))


@pytest.fixture(scope="session")
def flat40():
    return build_flat_ribbon(RibbonSpec(40, 8, 1))


@pytest.fixture(scope="session")
def ham7(flat7, model):
    return assemble(flat7, model)


@pytest.fixture(scope="session")
def ham40(flat40, model):
    return assemble(flat40, model)


@pytest.fixture(scope="session")
def bent7(flat7):
    """Small bent device: H=0.5 nm, CR=0.5 nm, theta=60 deg, no clamp."""
    spec = flat7.spec
    profile = resolve_profile(0.5, 0.5, 60.0, spec.channel_length)
    assert not profile.clamped
    return apply_step_deformation(flat7, profile)


@pytest.fixture(scope="session")
def bent7_ham(bent7, model):
    return assemble(bent7, model)


@pytest.fixture(scope="session")
def sharp_step_device(flat40):
    """Sharp low step on the wide ribbon (H=0.78, CR=0.40, theta=90).

    theta clamps to about 88.57 degrees; this is the geometry used for
    the localization and low-bias comparisons.
    """
    spec = flat40.spec
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        profile = resolve_profile(0.78, 0.40, 90.0, spec.channel_length)
    return apply_step_deformation(flat40, profile)


def rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)
