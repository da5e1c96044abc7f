"""
Shared fixtures and utilities for integration tests.

These tests run real conic solves and Monte-Carlo batteries, so they are slow.
"""

import os
from typing import Dict, Tuple

import pytest

from src.covert_uav.models.scenario import default_scenario
from src.covert_uav.models.trajectory import Bench, Mode, SolveResult
from src.covert_uav.optimizer import ScaOptions, sca_solve

# Covertness sampling is the slow part of a verified run
COVERT_SAMPLES = 72


def should_skip_integration_tests():
    """Check if integration tests should be skipped because the conic stack is missing."""
    if os.environ.get("COVERT_UAV_SKIP_INTEGRATION"):
        return True, "COVERT_UAV_SKIP_INTEGRATION is set"
    try:
        import cvxpy
    except ImportError:
        return True, "cvxpy is not installed"
    if "CLARABEL" not in cvxpy.installed_solvers():
        return True, "the CLARABEL solver is not available to cvxpy"
    return False, None


@pytest.fixture(scope="session", autouse=True)
def check_integration_requirements():
    """Automatically check if integration tests should be skipped.

    This fixture runs once per session and will skip all integration tests
    when no conic solver can be loaded.
    """
    should_skip, reason = should_skip_integration_tests()
    if should_skip:
        pytest.skip(f"Skipping all integration tests: {reason}")


def integration_options(**overrides) -> ScaOptions:
    """Options for integration runs: strict, verified, moderate sampling."""
    fields = {"covert_samples": COVERT_SAMPLES, "strict": True, "verify": True}
    fields.update(overrides)
    return ScaOptions(**fields)


class SolveCache:
    """Runs each (variant, mode, bench) once per session."""

    def __init__(self):
        self._results: Dict[Tuple[str, Mode, Bench], SolveResult] = {}

    def get(self, variant: str, mode: Mode = Mode.SINGLE, bench: Bench = Bench.PROPOSED) -> SolveResult:
        key = (variant, mode, bench)
        if key not in self._results:
            self._results[key] = sca_solve(default_scenario(variant), mode, bench, integration_options())
        return self._results[key]


@pytest.fixture(scope="session")
def solved():
    """Session-wide cache of full-size SCA runs."""
    return SolveCache()
