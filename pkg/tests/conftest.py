"""Shared fixtures: sample models, calibrations, and certificates.

Everything heavy is session-scoped so the expensive pieces (the n = 50
calibration, the invariance-programme certificates) are paid for once.
"""

from pathlib import Path

import pytest

from reachmon.estimation import calibrate_kalman
from reachmon.io import load_model
from reachmon.reachability import compute_certificate

REPO_ROOT = Path(__file__).resolve().parent.parent


@pytest.fixture(scope="session")
def repo_root() -> Path:
    return REPO_ROOT


@pytest.fixture(scope="session")
def synth_model():
    return load_model(REPO_ROOT / "models" / "synth_small.json")


@pytest.fixture(scope="session")
def tep_model():
    return load_model(REPO_ROOT / "models" / "tep_like.json")


@pytest.fixture(scope="session")
def synth_calibration(synth_model):
    return calibrate_kalman(
        synth_model.a, synth_model.c,
        synth_model.process_cov, synth_model.measurement_cov,
    )


@pytest.fixture(scope="session")
def tep_calibration(tep_model):
    return calibrate_kalman(
        tep_model.a, tep_model.c,
        tep_model.process_cov, tep_model.measurement_cov,
    )


@pytest.fixture(scope="session")
def synth_cert(synth_model, synth_calibration):
    """High-confidence certificate for the 4-state sample plant."""
    return compute_certificate(
        synth_model, synth_calibration, beta=0.05, p=0.99, delta_h=0.05,
    )


@pytest.fixture(scope="session")
def tep_cert(tep_model, tep_calibration):
    """Coarse-grid certificate for the 50-state surrogate (latency tests)."""
    return compute_certificate(
        tep_model, tep_calibration, beta=0.05, p=0.99, delta_h=0.9,
    )
