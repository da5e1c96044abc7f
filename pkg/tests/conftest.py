"""
Shared test configuration and fixtures.
"""

import sys
from pathlib import Path

import pytest
from dotenv import load_dotenv

# Add src to path for imports
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root / "src"))

# Load environment from project root .env file
project_env_file = project_root / ".env"
if project_env_file.exists():
    load_dotenv(project_env_file)

from src.covert_uav.config import reset_settings  # noqa: E402
from src.covert_uav.models.scenario import default_scenario  # noqa: E402


def pytest_collection_modifyitems(items):
    """Add integration marker to tests in integration directory."""
    for item in items:
        if "integration" in str(item.fspath):
            item.add_marker(pytest.mark.integration)


@pytest.fixture(autouse=True)
def fresh_settings():
    """Every test reads COVERT_UAV_* variables anew."""
    reset_settings()
    yield
    reset_settings()


@pytest.fixture
def scenario1():
    """Reference scenario 1, 50 slots."""
    return default_scenario("scenario1")


@pytest.fixture
def scenario2():
    return default_scenario("scenario2")


@pytest.fixture
def small_scenario():
    """Scenario 1 resampled to 20 slots of 5 s (same flight duration)."""
    return default_scenario("scenario1").with_updates(n_slots=20, slot_seconds=5.0)
