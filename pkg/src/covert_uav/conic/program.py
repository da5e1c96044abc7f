"""Solver-agnostic convex program built from cvxpy expressions.

A ConvexProgram records named variables and typed constraint rows (affine,
second-order cone, rotated cone, log epigraph) and maximizes one affine
objective. Rows are kept in insertion order so that the same construction
always yields the same program. After a solve the program re-checks every
row at the returned point without trusting the backend.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple, Union

import cvxpy as cp
import numpy as np
from pydantic import BaseModel, Field

from ..errors import ProgramError, ShapeError

logger = logging.getLogger(__name__)

ExprLike = Union[cp.Expression, np.ndarray, float, int]

SENSES = ("<=", ">=", "==")


class ProgramStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    NUMERICAL_LIMIT = "numerical_limit"


class RowKind(str, Enum):
    AFFINE = "affine"
    SOC = "soc"
    RSOC = "rsoc"
    LOG = "log"


class SolveOptions(BaseModel):
    """Backend selection and tolerances."""

    solver: str = "CLARABEL"
    feas_tol: float = Field(default=1e-8, gt=0.0)
    gap_tol: float = Field(default=1e-8, gt=0.0)
    max_iters: int = Field(default=500, ge=1)
    verbose: bool = False


@dataclass(frozen=True)
class ConstraintHandle:
    """Reference to a recorded row, used for residual and dual lookup."""

    kind: RowKind
    name: str
    index: int
    rows: int


@dataclass
class Row:
    kind: RowKind
    name: str
    operands: Tuple[cp.Expression, ...]
    sense: str = ""
    rows: int = 1


@dataclass
class SolveOutcome:
    """Status-tagged result; ``values`` is present exactly when status is optimal."""

    status: ProgramStatus
    objective: Optional[float] = None
    values: Optional[Dict[str, np.ndarray]] = None
    duals: Dict[str, np.ndarray] = field(default_factory=dict)
    backend_status: str = ""
    max_residual: Optional[float] = None
    solve_seconds: float = 0.0

    @property
    def optimal(self) -> bool:
        return self.status is ProgramStatus.OPTIMAL

    def value(self, name: str) -> np.ndarray:
        if self.values is None:
            raise ProgramError(f"no values: program status is {self.status.value}")
        return self.values[name]

    def dual(self, handle: ConstraintHandle) -> np.ndarray:
        """Flattened multipliers of a recorded row (empty if the backend gave none)."""
        return self.duals.get(handle.name, np.empty(0))


def _as_expr(value: ExprLike) -> cp.Expression:
    if isinstance(value, cp.Expression):
        return value
    return cp.Constant(np.asarray(value, dtype=float))


class ConvexProgram:
    """Maximize an affine objective over cone-representable constraints."""

    def __init__(self, name: str = "program"):
        self.name = name
        self.variables: Dict[str, cp.Variable] = {}
        self.rows: List[Row] = []
        self.objective: Optional[cp.Expression] = None
        self.solved = False
        self._row_names: Dict[str, int] = {}

    # Construction

    def add_variable(
        self,
        name: str,
        shape: Union[int, Tuple[int, ...]] = (),
        lb: Optional[ExprLike] = None,
        ub: Optional[ExprLike] = None,
    ) -> cp.Variable:
        """Declare a variable; bounds become affine rows ``<name>.lb`` / ``<name>.ub``."""
        self._check_open()
        if name in self.variables:
            raise ShapeError(f"variable {name!r} declared twice")
        var = cp.Variable(shape, name=name)
        self.variables[name] = var
        if lb is not None:
            self.add_affine(var, ">=", lb, name=f"{name}.lb")
        if ub is not None:
            self.add_affine(var, "<=", ub, name=f"{name}.ub")
        return var

    def add_affine(
        self, lhs: ExprLike, sense: str, rhs: ExprLike, name: Optional[str] = None
    ) -> ConstraintHandle:
        """Record ``lhs (<=|>=|==) rhs`` elementwise."""
        if sense not in SENSES:
            raise ShapeError(f"unknown sense {sense!r}")
        lhs_e, rhs_e = _as_expr(lhs), _as_expr(rhs)
        try:
            diff = lhs_e - rhs_e
        except ValueError as e:
            raise ShapeError(f"affine row shapes {lhs_e.shape} and {rhs_e.shape} differ") from e
        if not diff.is_affine():
            raise ShapeError("affine row is not affine")
        rows = int(np.prod(diff.shape)) if diff.shape else 1
        return self._record(RowKind.AFFINE, name, (lhs_e, rhs_e), sense=sense, rows=rows)

    def add_soc(self, x: ExprLike, t: ExprLike, name: Optional[str] = None) -> ConstraintHandle:
        """Record ``‖x‖ ≤ t``; with x of shape (n, m) and t of shape (n,), one cone per row."""
        x_e, t_e = _as_expr(x), _as_expr(t)
        n = self._cone_batch(x_e, t_e)
        for expr in (x_e, t_e):
            if not expr.is_affine():
                raise ShapeError("cone operands must be affine")
        return self._record(RowKind.SOC, name, (x_e, t_e), rows=n)

    def add_rsoc(
        self, x: ExprLike, a: ExprLike, b: ExprLike, name: Optional[str] = None
    ) -> ConstraintHandle:
        """Record ``‖x‖² ≤ 2ab`` with a, b ≥ 0, batched like add_soc."""
        x_e, a_e, b_e = _as_expr(x), _as_expr(a), _as_expr(b)
        if x_e.ndim not in (1, 2):
            raise ShapeError(f"cone operand must be a vector or matrix, got shape {x_e.shape}")
        n = 1 if x_e.ndim == 1 else x_e.shape[0]
        allowed = {()} if x_e.ndim == 1 else {(), (n,)}
        if a_e.shape not in allowed or b_e.shape not in allowed:
            raise ShapeError(
                f"rotated cone factors {a_e.shape}, {b_e.shape} do not match operand {x_e.shape}"
            )
        for expr in (x_e, a_e, b_e):
            if not expr.is_affine():
                raise ShapeError("cone operands must be affine")
        return self._record(RowKind.RSOC, name, (x_e, a_e, b_e), rows=n)

    def add_log_epigraph(
        self, t: ExprLike, s: ExprLike, name: Optional[str] = None
    ) -> ConstraintHandle:
        """Record ``t ≤ ln(s)`` elementwise."""
        t_e, s_e = _as_expr(t), _as_expr(s)
        if t_e.shape != s_e.shape:
            raise ShapeError(f"log epigraph shapes {t_e.shape} and {s_e.shape} differ")
        if not (t_e.is_affine() and s_e.is_affine()):
            raise ShapeError("log epigraph operands must be affine")
        rows = int(np.prod(t_e.shape)) if t_e.shape else 1
        return self._record(RowKind.LOG, name, (t_e, s_e), rows=rows)

    def maximize(self, objective: ExprLike) -> None:
        self._check_open()
        expr = _as_expr(objective)
        if expr.shape != () or not expr.is_affine():
            raise ShapeError("objective must be an affine scalar")
        self._check_declared(expr)
        self.objective = expr

    def _cone_batch(self, x: cp.Expression, t: cp.Expression) -> int:
        if x.ndim == 1:
            if t.shape != ():
                raise ShapeError(f"cone bound must be scalar for vector operand, got {t.shape}")
            return 1
        if x.ndim == 2:
            if t.shape != (x.shape[0],):
                raise ShapeError(f"cone bound shape {t.shape} does not match operand {x.shape}")
            return x.shape[0]
        raise ShapeError(f"cone operand must be a vector or matrix, got shape {x.shape}")

    def _record(
        self,
        kind: RowKind,
        name: Optional[str],
        operands: Tuple[cp.Expression, ...],
        sense: str = "",
        rows: int = 1,
    ) -> ConstraintHandle:
        self._check_open()
        for expr in operands:
            self._check_declared(expr)
        name = name or f"{kind.value}[{len(self.rows)}]"
        if name in self._row_names:
            raise ShapeError(f"constraint {name!r} recorded twice")
        self._row_names[name] = len(self.rows)
        self.rows.append(Row(kind=kind, name=name, operands=operands, sense=sense, rows=rows))
        return ConstraintHandle(kind=kind, name=name, index=len(self.rows) - 1, rows=rows)

    def _check_declared(self, expr: cp.Expression) -> None:
        for var in expr.variables():
            if self.variables.get(var.name()) is not var:
                raise ShapeError(f"expression uses undeclared variable {var.name()!r}")

    def _check_open(self) -> None:
        if self.solved:
            raise ProgramError(f"program {self.name!r} was already solved")

    # Inspection

    def census(self) -> Dict[str, int]:
        """Scalar variable count and row counts per constraint kind."""
        counts = {kind.value: 0 for kind in RowKind}
        for row in self.rows:
            counts[row.kind.value] += row.rows
        counts["variables"] = sum(int(np.prod(v.shape)) if v.shape else 1 for v in self.variables.values())
        return counts

    def residuals(self, assignment: Optional[Dict[str, np.ndarray]] = None) -> Dict[str, float]:
        """Worst relative violation of every row at ``assignment`` (or current values).

        Violations are divided by one plus the magnitude of the compared terms.
        """
        if assignment is not None:
            self.assign(assignment)
        return {row.name: _row_violation(row) for row in self.rows}

    def max_residual(self, assignment: Optional[Dict[str, np.ndarray]] = None) -> Tuple[str, float]:
        residuals = self.residuals(assignment)
        if not residuals:
            return "", 0.0
        name = max(residuals, key=lambda k: residuals[k])
        return name, residuals[name]

    def assign(self, assignment: Dict[str, np.ndarray]) -> None:
        missing = set(self.variables) - set(assignment)
        if missing:
            raise ShapeError(f"assignment misses variables {sorted(missing)}")
        for name, value in assignment.items():
            var = self.variables.get(name)
            if var is None:
                raise ShapeError(f"assignment names unknown variable {name!r}")
            var.value = np.broadcast_to(np.asarray(value, dtype=float), var.shape).copy() if var.shape else float(value)

    def evaluate_objective(self, assignment: Dict[str, np.ndarray]) -> float:
        if self.objective is None:
            raise ProgramError("objective not set")
        self.assign(assignment)
        return float(self.objective.value)

    def dump(self) -> str:
        """Plain-text listing of variables, objective and rows."""
        lines = [f"program {self.name}"]
        census = self.census()
        lines.append("census " + " ".join(f"{k}={v}" for k, v in census.items()))
        for name, var in self.variables.items():
            lines.append(f"var {name} shape={var.shape}")
        lines.append(f"maximize {self.objective}")
        for row in self.rows:
            if row.kind is RowKind.AFFINE:
                body = f"{row.operands[0]} {row.sense} {row.operands[1]}"
            elif row.kind is RowKind.SOC:
                body = f"norm({row.operands[0]}) <= {row.operands[1]}"
            elif row.kind is RowKind.RSOC:
                body = f"sum_squares({row.operands[0]}) <= 2 * ({row.operands[1]}) * ({row.operands[2]})"
            else:
                body = f"{row.operands[0]} <= log({row.operands[1]})"
            lines.append(f"{row.kind.value} {row.name} rows={row.rows}: {body}")
        return "\n".join(lines) + "\n"

    # Solving

    def to_cvxpy(self) -> Tuple[cp.Problem, List[Tuple[str, List[cp.Constraint]]]]:
        """Lower every row to cvxpy constraints, keeping the row-to-constraint map."""
        if self.objective is None:
            raise ProgramError("objective not set")
        lowered: List[Tuple[str, List[cp.Constraint]]] = []
        for row in self.rows:
            lowered.append((row.name, _lower(row)))
        constraints = [c for _, group in lowered for c in group]
        return cp.Problem(cp.Maximize(self.objective), constraints), lowered

    def solve(self, options: Optional[SolveOptions] = None, backend=None) -> SolveOutcome:
        """Solve with ``backend`` (cvxpy by default) and verify the returned point."""
        from .backends import get_backend

        options = options or SolveOptions()
        backend = backend or get_backend(options.solver)
        outcome = backend.solve(self, options)
        self.solved = True
        if outcome.status is ProgramStatus.OPTIMAL and outcome.values is not None:
            name, worst = self.max_residual(outcome.values)
            outcome.max_residual = worst
            if worst > 10.0 * options.feas_tol:
                logger.warning(
                    "Program %s: row %s violated by %.3e at the returned point",
                    self.name,
                    name,
                    worst,
                )
                outcome.status = ProgramStatus.NUMERICAL_LIMIT
                outcome.values = None
        return outcome


def _lower(row: Row) -> List[cp.Constraint]:
    ops = row.operands
    if row.kind is RowKind.AFFINE:
        lhs, rhs = ops
        if row.sense == "<=":
            return [lhs <= rhs]
        if row.sense == ">=":
            return [lhs >= rhs]
        return [lhs == rhs]
    if row.kind is RowKind.SOC:
        x, t = ops
        if x.ndim == 1:
            return [cp.SOC(t, x)]
        return [cp.SOC(t, x, axis=1)]
    if row.kind is RowKind.RSOC:
        # ‖x‖² ≤ 2ab  ⇔  ‖(√2·x, a − b)‖ ≤ a + b
        x, a, b = ops
        if x.ndim == 1:
            stacked = cp.hstack([np.sqrt(2.0) * x, cp.reshape(a - b, (1,), order="F")])
            return [cp.SOC(a + b, stacked)]
        n = x.shape[0]
        a_n = a if a.shape == (n,) else a + np.zeros(n)
        b_n = b if b.shape == (n,) else b + np.zeros(n)
        stacked = cp.hstack([np.sqrt(2.0) * x, cp.reshape(a_n - b_n, (n, 1), order="F")])
        return [cp.SOC(a_n + b_n, stacked, axis=1)]
    t, s = ops
    return [t <= cp.log(s)]


def _values(expr: cp.Expression) -> np.ndarray:
    value = expr.value
    if value is None:
        raise ProgramError("expression has no value; assign variables first")
    return np.asarray(value, dtype=float)


def _row_violation(row: Row) -> float:
    ops = row.operands
    if row.kind is RowKind.AFFINE:
        lhs, rhs = _values(ops[0]), _values(ops[1])
        diff = lhs - rhs
        if row.sense == "<=":
            gap = np.maximum(diff, 0.0)
        elif row.sense == ">=":
            gap = np.maximum(-diff, 0.0)
        else:
            gap = np.abs(diff)
        scale = 1.0 + np.maximum(np.abs(lhs), np.abs(rhs))
        return float(np.max(gap / scale))
    if row.kind is RowKind.SOC:
        x, t = _values(ops[0]), _values(ops[1])
        norms = np.linalg.norm(np.atleast_2d(x), axis=1)
        t = np.atleast_1d(t)
        return float(np.max(np.maximum(norms - t, 0.0) / (1.0 + np.abs(t))))
    if row.kind is RowKind.RSOC:
        x, a, b = _values(ops[0]), _values(ops[1]), _values(ops[2])
        squares = np.sum(np.atleast_2d(x) ** 2, axis=1)
        a = np.broadcast_to(np.atleast_1d(a), squares.shape)
        b = np.broadcast_to(np.atleast_1d(b), squares.shape)
        cone = np.maximum(squares - 2.0 * a * b, 0.0) / (1.0 + squares + 2.0 * np.abs(a * b))
        sign = np.maximum(np.maximum(-a, -b), 0.0) / (1.0 + np.abs(a) + np.abs(b))
        return float(np.max(np.maximum(cone, sign)))
    t, s = np.atleast_1d(_values(ops[0])), np.atleast_1d(_values(ops[1]))
    with np.errstate(divide="ignore", invalid="ignore"):
        log_s = np.where(s > 0.0, np.log(np.where(s > 0.0, s, 1.0)), -np.inf)
    gap = np.maximum(t - log_s, 0.0) / (1.0 + np.abs(t))
    return float(np.max(gap))

