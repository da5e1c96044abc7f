"""Base class for conic backends."""

from abc import ABC, abstractmethod
from typing import TYPE_CHECKING

from ..program import ProgramStatus, SolveOptions, SolveOutcome

if TYPE_CHECKING:
    from ..program import ConvexProgram


class ConicBackend(ABC):
    """Solves a ConvexProgram and reports a status-tagged outcome."""

    name = "base"

    @abstractmethod
    def solve(self, program: "ConvexProgram", options: SolveOptions) -> SolveOutcome:
        """Solve the program; raise BackendError on solver failure."""

    @abstractmethod
    def available(self) -> bool:
        """Whether the underlying solver is installed."""

    def classify_status(self, status: str) -> ProgramStatus:
        """Map a backend status string to a program status."""
        status_lower = status.lower()
        if status_lower == "optimal":
            return ProgramStatus.OPTIMAL
        if status_lower.startswith("infeasible"):
            return ProgramStatus.INFEASIBLE
        if status_lower.startswith("unbounded"):
            return ProgramStatus.UNBOUNDED
        return ProgramStatus.NUMERICAL_LIMIT
