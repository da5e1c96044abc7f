"""Utility functions for covert-uav."""

import hashlib
import json
import logging
import os
import sys
import uuid
from datetime import datetime, timezone
from typing import Any, Dict


def setup_logging(log_level: str = "INFO") -> None:
    """Setup application logging."""
    logging.basicConfig(
        level=getattr(logging, log_level.upper()),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        handlers=[logging.StreamHandler(sys.stdout)],
        force=True,
    )


def generate_run_id() -> str:
    """Generate a unique run ID."""
    return str(uuid.uuid4())


def get_current_timestamp() -> str:
    """Get current timestamp in ISO format."""
    return datetime.now(timezone.utc).replace(tzinfo=None).isoformat() + "Z"


def stable_hash(payload: Dict[str, Any]) -> str:
    """SHA-256 of a JSON payload with sorted keys."""
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def resolve_parallelism(requested: int, n_tasks: int) -> int:
    """Worker count: requested value, or tasks capped at hardware threads when 0."""
    if requested > 0:
        return max(1, min(requested, n_tasks))
    return max(1, min(n_tasks, os.cpu_count() or 1))
