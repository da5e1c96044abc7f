"""Data models for scenarios, trajectories and solve results."""

from .scenario import (
    Point,
    Scenario,
    Variant,
    Warden,
    db_to_linear,
    dbm_to_watts,
    default_scenario,
    dump_scenario,
    load_scenario,
)
from .trajectory import (
    Bench,
    CovertEntry,
    CovertReport,
    Iterate,
    IterationRecord,
    Mode,
    SlotState,
    SolveResult,
    Status,
    Trajectory,
)

__all__ = [
    "Point",
    "Scenario",
    "Variant",
    "Warden",
    "db_to_linear",
    "dbm_to_watts",
    "default_scenario",
    "dump_scenario",
    "load_scenario",
    "Bench",
    "CovertEntry",
    "CovertReport",
    "Iterate",
    "IterationRecord",
    "Mode",
    "SlotState",
    "SolveResult",
    "Status",
    "Trajectory",
]
