"""Pytest fixtures for DeepRacing testbed tests."""

import sys
from pathlib import Path

# Add src to path
src_path = str(Path(__file__).parent.parent / "src")
if src_path not in sys.path:
    sys.path.insert(0, src_path)

import pytest  # noqa: E402

from deepracing.simenv import generate_oval_track  # noqa: E402


@pytest.fixture(scope="session")
def oval_track():
    """Default stadium: 200 m straights, 50 m turn radius, 6 m half width."""
    return generate_oval_track()


@pytest.fixture(scope="session")
def small_track():
    """Short stadium for trials that need several laps quickly."""
    return generate_oval_track(straight_length=40.0, radius=20.0, half_width=4.0)


@pytest.fixture
def rng():
    import numpy as np

    return np.random.default_rng(20190917)


@pytest.fixture
def testbed_service():
    """Fresh TestbedService installed as the global instance."""
    import deepracing.service as service_module
    from deepracing.service import TestbedService

    service_module._service = None
    service = TestbedService()
    service_module._service = service
    yield service

    # Cleanup
    service_module._service = None


@pytest.fixture
def mock_testbed_service():
    """Mock TestbedService returning canned results."""
    from unittest.mock import Mock

    mock = Mock()
    mock.run_trial.return_value = {
        "laps": 5,
        "lap_times": [47.9, 47.6, 47.6, 47.6, 47.6],
        "mean_lap_time": 47.66,
        "NBF": 0,
        "BFS": 0.0,
        "TBF": 238.3,
        "DBF": 3570.8,
        "dnf": False,
        "dnf_reason": None,
        "files": [],
    }
    mock.clock_test.return_value = {
        "slope": 0.99999,
        "intercept": -1.616876,
        "r_squared": 1.0,
        "n_samples": 10000,
        "healthy": True,
    }
    mock.latency_test.return_value = {
        "injected_ms": 26.79,
        "estimated_ms": 27.3,
        "error_ms": 0.51,
        "rate_hz": 60.0,
        "samples": 192,
    }
    mock.build_dataset.return_value = {
        "records": 93,
        "log_samples": 181,
        "log_duration": 3.0,
        "out": "labels.csv",
    }
    mock.status.return_value = {"status": "ready", "trials_run": 0}
    return mock
