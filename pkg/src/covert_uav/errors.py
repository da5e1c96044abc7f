"""Exception hierarchy for covert-uav."""

from typing import Any, Dict, Optional

EXIT_OK = 0
EXIT_GENERIC = 1
EXIT_VALIDATION = 2
EXIT_SOLVER = 3
EXIT_VERIFICATION = 4
EXIT_IO = 5


class CovertUavError(Exception):
    """Base class for every error raised by the package."""

    exit_code = EXIT_GENERIC

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details: Dict[str, Any] = details

    def to_dict(self) -> Dict[str, Any]:
        """Machine-readable form used by the CLI."""
        return {
            "error": self.message,
            "type": type(self).__name__,
            "exit_code": self.exit_code,
            "details": {k: _jsonable(v) for k, v in self.details.items()},
        }


def _jsonable(value: Any) -> Any:
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    return str(value)


# Scenario documents

class ScenarioError(CovertUavError):
    exit_code = EXIT_VALIDATION


class ParseError(ScenarioError):
    """Malformed scenario or sweep document."""


class ValidationError(ScenarioError):
    """A scenario invariant is violated."""

    def __init__(self, message: str, field: Optional[str] = None, **details: Any):
        super().__init__(message, field=field, **details)
        self.field = field


class ReachabilityError(ScenarioError):
    """Landing point cannot be reached within the flight time."""


# Geometry and detection

class GeometryError(CovertUavError):
    exit_code = EXIT_VALIDATION


class DegenerateGeometry(GeometryError):
    """Transmitter and receiver coincide (zero distance and zero altitude)."""


class DetectionError(CovertUavError):
    exit_code = EXIT_VALIDATION


class DomainError(DetectionError):
    """Argument outside the domain of a detection formula."""


class BracketError(DetectionError):
    """No finite bracket contains the covertness root."""


class StatModelError(DetectionError):
    """Chi-squared scaling of the multi-antenna statistic is not positive."""


class SingularCovariance(DetectionError):
    """Covariance matrix is singular (zero noise power)."""


# Conic programs

class ProgramError(CovertUavError):
    exit_code = EXIT_SOLVER


class ShapeError(ProgramError):
    """Constraint operands have inconsistent shapes or unknown variables."""


class BackendError(ProgramError):
    """The conic backend failed (distinct from a certified infeasibility)."""


# SCA and optimizer

class ScaError(CovertUavError):
    exit_code = EXIT_SOLVER


class LinearizationError(ScaError):
    """Linearization point outside the domain of the surrogate."""


class ModeError(ScaError):
    """Benchmark and iterate are inconsistent."""

    exit_code = EXIT_VALIDATION


class OptimizerError(CovertUavError):
    exit_code = EXIT_SOLVER


class InfeasibleInit(OptimizerError):
    """The initial point violates a subproblem constraint."""


class SubproblemFailure(OptimizerError):
    """A convex subproblem did not return an optimal point."""

    def __init__(self, message: str, iteration: int, status: str, **details: Any):
        super().__init__(message, iteration=iteration, status=status, **details)
        self.iteration = iteration
        self.status = status


class VerificationError(CovertUavError):
    exit_code = EXIT_VERIFICATION


class IoError(CovertUavError):
    exit_code = EXIT_IO


def exit_code_for(error: BaseException) -> int:
    """Map an exception to the CLI exit code."""
    if isinstance(error, CovertUavError):
        return error.exit_code
    if isinstance(error, OSError):
        return EXIT_IO
    return EXIT_GENERIC
