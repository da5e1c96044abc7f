"""Configuration management for covert-uav."""

import logging
from typing import Optional

try:
    from pydantic_settings import BaseSettings
except ImportError:
    from pydantic import BaseSettings
from pydantic import Field

logger = logging.getLogger(__name__)

SUPPORTED_SOLVERS = ("CLARABEL", "SCS", "ECOS", "MOSEK")


class Settings(BaseSettings):
    """Runtime settings with environment variable support."""

    log_level: str = Field(default="INFO", description="Log level", alias="COVERT_UAV_LOG_LEVEL")

    # Conic backend
    solver: str = Field(default="CLARABEL", description="cvxpy solver name", alias="COVERT_UAV_SOLVER")
    feas_tol: float = Field(default=1e-8, gt=0, description="Primal feasibility tolerance", alias="COVERT_UAV_FEAS_TOL")
    gap_tol: float = Field(default=1e-8, gt=0, description="Duality gap tolerance", alias="COVERT_UAV_GAP_TOL")

    # SCA loop
    max_iter: int = Field(default=50, ge=1, description="Maximum SCA iterations", alias="COVERT_UAV_MAX_ITER")
    covert_samples: int = Field(
        default=200, ge=1, description="Ball samples per (slot, warden) in the covertness check",
        alias="COVERT_UAV_COVERT_SAMPLES",
    )

    # Monte-Carlo battery
    mc_trials: int = Field(default=1_000_000, ge=1, description="Trials per Monte-Carlo case", alias="COVERT_UAV_MC_TRIALS")
    mc_seed: int = Field(default=42, description="Monte-Carlo seed", alias="COVERT_UAV_MC_SEED")

    # Sweeps
    parallelism: int = Field(default=0, ge=0, description="Sweep workers (0 = auto)", alias="COVERT_UAV_PARALLELISM")

    model_config = {"env_file": ".env", "case_sensitive": False, "extra": "ignore", "populate_by_name": True}


# Global settings instance
_settings: Optional[Settings] = None


def get_settings() -> Settings:
    """Get application settings (singleton pattern)."""
    global _settings
    if _settings is None:
        _settings = Settings()

        if _settings.solver.upper() not in SUPPORTED_SOLVERS:
            logger.warning(
                "COVERT_UAV_SOLVER=%s is not a known conic backend; falling back to CLARABEL.",
                _settings.solver,
            )
            _settings.solver = "CLARABEL"
        else:
            _settings.solver = _settings.solver.upper()

    return _settings


def reset_settings() -> None:
    """Drop the cached settings so the next call re-reads the environment."""
    global _settings
    _settings = None
