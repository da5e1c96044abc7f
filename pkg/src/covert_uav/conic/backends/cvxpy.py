"""cvxpy backend (Clarabel by default)."""

import logging
import time
from typing import TYPE_CHECKING, Any, Dict

import cvxpy as cp
import numpy as np

from ...errors import BackendError
from ..program import ProgramStatus, SolveOptions, SolveOutcome
from .base import ConicBackend

if TYPE_CHECKING:
    from ..program import ConvexProgram

logger = logging.getLogger(__name__)


def solver_kwargs(solver: str, options: SolveOptions) -> Dict[str, Any]:
    """Tolerance keywords in each solver's own vocabulary."""
    if solver == "CLARABEL":
        return {
            "tol_feas": options.feas_tol,
            "tol_gap_abs": options.gap_tol,
            "tol_gap_rel": options.gap_tol,
            "max_iter": options.max_iters,
        }
    if solver == "SCS":
        return {"eps_abs": options.feas_tol, "eps_rel": options.gap_tol, "max_iters": 100 * options.max_iters}
    if solver == "ECOS":
        return {
            "feastol": options.feas_tol,
            "abstol": options.gap_tol,
            "reltol": options.gap_tol,
            "max_iters": options.max_iters,
        }
    if solver == "MOSEK":
        return {
            "mosek_params": {
                "MSK_DPAR_INTPNT_CO_TOL_PFEAS": options.feas_tol,
                "MSK_DPAR_INTPNT_CO_TOL_DFEAS": options.feas_tol,
                "MSK_DPAR_INTPNT_CO_TOL_REL_GAP": options.gap_tol,
            }
        }
    return {}


class CvxpyBackend(ConicBackend):
    """Lowers the program to a cvxpy Problem and calls an installed conic solver."""

    name = "cvxpy"

    def __init__(self, solver: str = "CLARABEL"):
        self.solver = solver.upper()

    def available(self) -> bool:
        return self.solver in cp.installed_solvers()

    def solve(self, program: "ConvexProgram", options: SolveOptions) -> SolveOutcome:
        problem, lowered = program.to_cvxpy()
        start = time.perf_counter()
        try:
            problem.solve(
                solver=self.solver,
                verbose=options.verbose,
                **solver_kwargs(self.solver, options),
            )
        except cp.error.SolverError as e:
            raise BackendError(
                f"{self.solver} failed on program {program.name}: {e}",
                solver=self.solver,
                program=program.name,
            ) from e
        elapsed = time.perf_counter() - start

        backend_status = str(problem.status)
        status = self.classify_status(backend_status)
        if backend_status == cp.OPTIMAL_INACCURATE:
            # the program's own residual check decides whether the point is usable
            logger.info("Program %s: %s reported %s", program.name, self.solver, backend_status)
            status = ProgramStatus.OPTIMAL

        outcome = SolveOutcome(status=status, backend_status=backend_status, solve_seconds=elapsed)
        if status is not ProgramStatus.OPTIMAL:
            logger.debug("Program %s finished with %s", program.name, backend_status)
            return outcome

        values = {}
        for name, var in program.variables.items():
            if var.value is None:
                raise BackendError(
                    f"{self.solver} returned no value for {name}",
                    solver=self.solver,
                    program=program.name,
                )
            values[name] = np.array(var.value, dtype=float)
        outcome.values = values
        outcome.objective = float(problem.value)
        for name, constraints in lowered:
            parts = [_dual_array(c.dual_value) for c in constraints if c.dual_value is not None]
            if parts:
                outcome.duals[name] = np.concatenate(parts)
        return outcome


def _dual_array(dual: Any) -> np.ndarray:
    """Row multipliers as a flat array; cone rows keep the multiplier of their bound."""
    if isinstance(dual, (list, tuple)):
        # SOC: [bound multipliers, vector multipliers]
        dual = dual[0]
    return np.ravel(np.asarray(dual, dtype=float))
