"""Convex program representation and solver backends."""

from .program import (
    ConstraintHandle,
    ConvexProgram,
    ProgramStatus,
    RowKind,
    SolveOptions,
    SolveOutcome,
)

__all__ = [
    "ConstraintHandle",
    "ConvexProgram",
    "ProgramStatus",
    "RowKind",
    "SolveOptions",
    "SolveOutcome",
]
