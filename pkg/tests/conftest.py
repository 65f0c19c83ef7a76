import numpy as np
import pytest
import torch
from hypothesis import HealthCheck, settings

from egoppg.synth import SynthSpec, generate

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

torch.set_num_threads(1)

# filled by tests/test_acceptance.py, printed after the run
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])


@pytest.fixture(scope="session")
def stationary_72():
    """Five-minute 72 bpm recording without head motion."""
    spec = SynthSpec(duration_s=300.0, hr_profile=72.0)
    return generate(spec, seed=0)


@pytest.fixture(scope="session")
def short_recording():
    """90 s recording with two activities and device clock offsets."""
    spec = SynthSpec(duration_s=90.0, hr_profile=[(0.0, 66.0), (90.0, 78.0)],
                     activities=[("office", 0.0, 45.0), ("walking", 45.0, 90.0)],
                     device_offsets={"ppg": 0.8, "ecg": -1.1}, device_drift_ppm={"ppg": 25.0, "ecg": -10.0},
                     participant="S01")
    return generate(spec, seed=1)


@pytest.fixture(scope="session")
def synced_short(short_recording):
    from egoppg.ingest import sync_streams
    return sync_streams(short_recording[0])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
