"""SCA outer loop, initialization and robust covertness verification."""

import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from pydantic import ValidationError as PydanticValidationError

from .channel import gain_sq, min_avg_rate, slot_rates, validate_trajectory, warden_sinr_array
from .conic import SolveOptions
from .config import Settings, get_settings
from .detection import (
    SlotDetectionInput,
    dep_multi,
    dep_single,
    gamma_cap,
    kl_divergence,
    pinsker_bound,
)
from .errors import (
    InfeasibleInit,
    LinearizationError,
    OptimizerError,
    ScaError,
    SubproblemFailure,
    ValidationError,
)
from .models.scenario import Scenario
from .models.trajectory import (
    Bench,
    CovertEntry,
    CovertReport,
    Iterate,
    IterationRecord,
    Mode,
    SolveResult,
    Status,
    Trajectory,
)
from .sca import SPEED_MARGIN, assemble_subproblem, covert_power_limit, power_floor, tight_slacks

logger = logging.getLogger(__name__)

# Safety factor on the covert power limit of the initial trajectory.
INIT_POWER_FACTOR = 0.9

# Final trajectories may miss endpoints and speed limits by this much (m).
FLIGHT_TOL = 1e-6


class ScaOptions(BaseModel):
    """Outer-loop controls; unset fields come from Settings and the scenario."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    max_iter: int = Field(default=50, ge=1)
    tol: Optional[float] = Field(default=None, gt=0.0)
    solver: str = "CLARABEL"
    feas_tol: float = 1e-8
    gap_tol: float = 1e-8
    chain_tol: float = 1e-6
    covert_samples: int = Field(default=200, ge=1)
    verify: bool = True
    strict: bool = True
    hover_start: bool = True
    dump_dir: Optional[Path] = None

    @classmethod
    def from_settings(cls, settings: Optional[Settings] = None, **overrides) -> "ScaOptions":
        settings = settings or get_settings()
        values = {
            "max_iter": settings.max_iter,
            "solver": settings.solver,
            "feas_tol": settings.feas_tol,
            "gap_tol": settings.gap_tol,
            "covert_samples": settings.covert_samples,
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        try:
            return cls(**values)
        except PydanticValidationError as e:
            first = e.errors()[0]
            field = ".".join(str(part) for part in first["loc"]) or None
            raise ValidationError(
                f"invalid option {field}: {first['msg']}", field=field, value=first.get("input")
            ) from e

    def solve_options(self) -> SolveOptions:
        return SolveOptions(solver=self.solver, feas_tol=self.feas_tol, gap_tol=self.gap_tol)


def _antennas(scn: Scenario, mode: Mode) -> int:
    return scn.n_antennas if mode is Mode.MULTI else 1


def initialize(
    scn: Scenario,
    bench: Union[Bench, str] = Bench.PROPOSED,
    mode: Union[Mode, str] = Mode.SINGLE,
    verify: bool = True,
) -> Iterate:
    """Straight constant-speed flights with the largest safe covert power.

    The hovering-jammer benchmark parks J at the midpoint of its endpoints.
    """
    bench = bench if isinstance(bench, Bench) else Bench.parse(bench)
    mode = Mode(mode)
    n = scn.n_slots
    q_s = np.linspace(scn.s_start, scn.s_end, n)
    if bench is Bench.B3_HOVER_J:
        hover = (np.asarray(scn.j_start) + np.asarray(scn.j_end)) / 2.0
        q_j = np.tile(hover, (n, 1))
    else:
        q_j = np.linspace(scn.j_start, scn.j_end, n)

    gamma_max = gamma_cap(mode, scn.epsilon, scn.n_obs)
    k = _antennas(scn, mode)
    limit = covert_power_limit(scn, q_s, q_j, gamma_max, k)
    p_s = np.minimum(scn.p_max, INIT_POWER_FACTOR * limit)
    if np.any(p_s < 0.0):
        raise InfeasibleInit("negative covert power limit", slots=np.flatnonzero(p_s < 0).tolist())
    p_s = np.maximum(p_s, power_floor(scn, gamma_max, k))

    traj = Trajectory(q_s=q_s, q_j=q_j, p_s=p_s)
    d_prev, c_prev = tight_slacks(scn, traj)
    it = Iterate(traj=traj, d_prev=d_prev, c_prev=c_prev, objective=min_avg_rate(traj, scn))

    if verify:
        sub = assemble_subproblem(scn, it, mode, bench, gamma_max=gamma_max)
        row, violation = sub.check_iterate()
        if violation > 1e-9:
            raise InfeasibleInit(
                f"initial point violates {row} by {violation:.3e}", row=row, violation=violation
            )
    return it


def hover_start(
    scn: Scenario, hover: Trajectory, mode: Union[Mode, str] = Mode.SINGLE
) -> Optional[Iterate]:
    """Start for the proposed scheme taken from a hovering-jammer trajectory.

    S keeps its path. J flies to the hover point at full speed, waits there and
    leaves just in time to land; S power is lowered under the covert limit of
    that jammer path. None when J cannot reach the point and still land.
    """
    mode = Mode(mode)
    n = scn.n_slots
    point = np.asarray(hover.q_j[0], dtype=float)
    j_start = np.asarray(scn.j_start, dtype=float)
    j_end = np.asarray(scn.j_end, dtype=float)
    step = scn.j_step - SPEED_MARGIN
    out_len = float(np.linalg.norm(point - j_start))
    back_len = float(np.linalg.norm(j_end - point))
    if step <= 0.0:
        return None
    arrive = math.ceil(out_len / step)
    leave = n - 1 - math.ceil(back_len / step)
    if arrive > leave:
        logger.debug("Hover point %s out of reach (arrive %d, leave %d)", point.tolist(), arrive, leave)
        return None

    slots = np.arange(n)
    q_j = np.tile(point, (n, 1))
    going = slots < arrive
    q_j[going] = j_start + np.outer(slots[going] * step / out_len, point - j_start)
    coming = slots > leave
    q_j[coming] = j_end + np.outer((n - 1 - slots[coming]) * step / back_len, point - j_end)

    gamma_max = gamma_cap(mode, scn.epsilon, scn.n_obs)
    k = _antennas(scn, mode)
    limit = covert_power_limit(scn, hover.q_s, q_j, gamma_max, k)
    if np.any(limit < 0.0):
        return None
    p_s = np.minimum(hover.p_s, INIT_POWER_FACTOR * limit)
    p_s = np.maximum(p_s, power_floor(scn, gamma_max, k))

    traj = Trajectory(q_s=np.array(hover.q_s, dtype=float), q_j=q_j, p_s=p_s)
    d_prev, c_prev = tight_slacks(scn, traj)
    return Iterate(traj=traj, d_prev=d_prev, c_prev=c_prev, objective=min_avg_rate(traj, scn))


@dataclass
class _Run:
    """Outer-loop state of one start."""

    it: Iterate
    trace: List[float]
    records: List[IterationRecord]
    status: Status = Status.MAX_ITER


def _iterate(
    scn: Scenario,
    it: Iterate,
    mode: Mode,
    bench: Bench,
    opts: ScaOptions,
    label: str = "straight start",
) -> _Run:
    """SCA iterations from ``it`` until the objective improves by less than the tolerance."""
    tol = scn.sca_tol if opts.tol is None else opts.tol
    solve_options = opts.solve_options()
    gamma_max = gamma_cap(mode, scn.epsilon, scn.n_obs)
    run = _Run(
        it=it,
        trace=[it.objective],
        records=[
            IterationRecord(
                iteration=0,
                objective=it.objective,
                min_avg_rate=min_avg_rate(it.traj, scn),
                solver_status="init",
                wall_seconds=0.0,
            )
        ],
    )
    logger.info(
        "SCA %s/%s (%s): %d slots, gamma_max=%.6g, initial rate %.6f",
        mode.value,
        bench.value,
        label,
        scn.n_slots,
        gamma_max,
        it.objective,
    )

    for iteration in range(1, opts.max_iter + 1):
        tick = time.perf_counter()
        sub = assemble_subproblem(scn, run.it, mode, bench, gamma_max=gamma_max)

        row, violation = sub.check_iterate()
        if violation > opts.chain_tol:
            if iteration == 1:
                raise InfeasibleInit(
                    f"initial point violates {row} by {violation:.3e}", row=row, violation=violation
                )
            if opts.strict:
                raise LinearizationError(
                    f"iteration {iteration}: incumbent violates {row} by {violation:.3e}",
                    iteration=iteration,
                    row=row,
                    violation=violation,
                )
            logger.warning(
                "Iteration %d: incumbent violates %s by %.3e", iteration, row, violation
            )

        if opts.dump_dir is not None:
            opts.dump_dir.mkdir(parents=True, exist_ok=True)
            (opts.dump_dir / f"program_{iteration:03d}.txt").write_text(sub.program.dump())

        outcome = sub.program.solve(solve_options)
        if not outcome.optimal:
            failure = SubproblemFailure(
                f"subproblem {iteration} ended with {outcome.status.value} ({outcome.backend_status})",
                iteration=iteration,
                status=outcome.backend_status or outcome.status.value,
            )
            if opts.strict:
                raise failure
            logger.warning("%s; keeping the incumbent", failure.message)
            run.status = Status.SUBPROBLEM_FAILURE
            break

        candidate = sub.extract(outcome)
        improvement = candidate.objective - run.it.objective
        accepted = improvement >= 0.0
        if accepted:
            run.it = candidate
        run.trace.append(run.it.objective)
        elapsed = time.perf_counter() - tick
        rate = min_avg_rate(run.it.traj, scn)
        active = sub.active_caps(outcome)
        run.records.append(
            IterationRecord(
                iteration=iteration,
                objective=candidate.objective,
                min_avg_rate=rate,
                improvement=improvement,
                solver_status=outcome.backend_status,
                wall_seconds=elapsed,
                active_caps=active,
            )
        )
        logger.info(
            "Iteration %d: eta=%.6f improvement=%.3e rate=%.6f active caps=%d status=%s (%.2fs)",
            iteration,
            candidate.objective,
            improvement,
            rate,
            active,
            outcome.backend_status,
            elapsed,
        )
        if not accepted or improvement < tol:
            run.status = Status.CONVERGED
            break
    return run


def _hover_run(scn: Scenario, mode: Mode, opts: ScaOptions) -> Optional[_Run]:
    """Proposed-scheme run started from the hovering-jammer optimum, if it can be built."""
    quiet = opts.model_copy(update={"verify": False, "dump_dir": None})
    try:
        hovering = sca_solve(scn, mode, Bench.B3_HOVER_J, quiet)
        it = hover_start(scn, hovering.trajectory, mode)
        if it is None:
            return None
        return _iterate(scn, it, mode, Bench.PROPOSED, quiet, label="hover start")
    except (OptimizerError, ScaError) as e:
        logger.warning("Hover start abandoned: %s", e.message)
        return None


def sca_solve(
    scn: Scenario,
    mode: Union[Mode, str] = Mode.SINGLE,
    bench: Union[Bench, str] = Bench.PROPOSED,
    opts: Optional[ScaOptions] = None,
) -> SolveResult:
    """Run SCA iterations until the objective improves by less than the tolerance.

    A subproblem whose optimum falls below the incumbent (solver noise) ends
    the run with the incumbent kept, so the trace never decreases. The
    proposed scheme is also run from the hovering-jammer optimum (see
    ``hover_start``) and the better of the two runs is returned.
    """
    mode = Mode(mode)
    bench = bench if isinstance(bench, Bench) else Bench.parse(bench)
    opts = opts or ScaOptions.from_settings()

    start = time.perf_counter()
    run = _iterate(scn, initialize(scn, bench, mode, verify=False), mode, bench, opts)
    if bench is Bench.PROPOSED and opts.hover_start and run.status is not Status.SUBPROBLEM_FAILURE:
        other = _hover_run(scn, mode, opts)
        if other is not None and other.it.objective > run.it.objective:
            logger.info("Hover start wins: %.6f over %.6f", other.it.objective, run.it.objective)
            run = other
    it = run.it

    validate_trajectory(it.traj, scn, tol=FLIGHT_TOL, jammer_endpoints=bench is not Bench.B3_HOVER_J)
    result = SolveResult(
        final=it,
        trace=run.trace,
        status=run.status,
        mode=mode,
        bench=bench,
        records=run.records,
        rates=slot_rates(it.traj, scn),
        wall_seconds=time.perf_counter() - start,
    )
    if opts.verify:
        result.covert_report = verify_covertness(result, scn, mode, opts.covert_samples)
    logger.info(
        "SCA %s/%s finished: %s after %d iterations, min avg rate %.6f, avg power %.4g W",
        mode.value,
        bench.value,
        run.status.value,
        result.iterations,
        result.min_avg_rate,
        result.avg_power,
    )
    return result


def _candidates(center: np.ndarray, radius: float, q_s: np.ndarray, q_j: np.ndarray, samples: int) -> np.ndarray:
    """Warden positions to test per slot: boundary samples, center, and the two analytic extremes."""
    n = q_s.shape[0]
    angles = 2.0 * math.pi * np.arange(samples) / samples
    ring = center + radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)

    towards_s = q_s - center
    dist_s = np.linalg.norm(towards_s, axis=1, keepdims=True)
    nearest_s = center + towards_s * np.minimum(1.0, radius / np.maximum(dist_s, 1e-300))

    away_j = center - q_j
    dist_j = np.linalg.norm(away_j, axis=1, keepdims=True)
    farthest_j = center + radius * np.where(dist_j > 0.0, away_j / np.maximum(dist_j, 1e-300), 0.0)

    points = np.empty((n, samples + 3, 2))
    points[:, :samples] = ring[None, :, :]
    points[:, samples] = center
    points[:, samples + 1] = nearest_s
    points[:, samples + 2] = farthest_j
    return points


def _detection_input(scn: Scenario, traj: Trajectory, n: int, warden_pos: np.ndarray) -> SlotDetectionInput:
    return SlotDetectionInput(
        p_s=float(traj.p_s[n]),
        p_jam=scn.p_jam,
        gain_sw=gain_sq(traj.q_s[n], scn.s_alt, warden_pos, scn.ref_gain),
        gain_jw=gain_sq(traj.q_j[n], scn.j_alt, warden_pos, scn.ref_gain),
        noise=scn.noise_power,
    )


def verify_covertness(
    res: SolveResult, scn: Scenario, mode: Union[Mode, str] = Mode.SINGLE, samples: int = 200
) -> CovertReport:
    """Worst sampled SINR ratio and detection error probability per (slot, warden)."""
    mode = Mode(mode)
    if res.status is not Status.CONVERGED:
        logger.warning("Verifying covertness of a %s run", res.status.value)
    gamma_max = gamma_cap(mode, scn.epsilon, scn.n_obs)
    k = _antennas(scn, mode)
    traj = res.final.traj
    report = CovertReport(mode=mode, gamma_max=gamma_max, samples=samples)

    for m, warden in enumerate(scn.wardens):
        points = _candidates(np.asarray(warden.est_pos, dtype=float), warden.radius, traj.q_s, traj.q_j, samples)
        gamma = warden_sinr_array(
            traj.q_s[:, None, :],
            traj.q_j[:, None, :],
            traj.p_s[:, None],
            points,
            scn,
            n_antennas=k,
        )
        worst = np.argmax(gamma, axis=1)
        for n in range(scn.n_slots):
            g = float(gamma[n, worst[n]])
            if mode is Mode.MULTI:
                min_dep = dep_multi(_detection_input(scn, traj, n, points[n, worst[n]]), scn.n_obs, k)
            else:
                min_dep = dep_single(g, scn.n_obs)
            entry = CovertEntry(
                slot=n,
                warden=m,
                max_ratio=g / gamma_max,
                min_dep=min_dep,
                worst_x=float(points[n, worst[n], 0]),
                worst_y=float(points[n, worst[n], 1]),
                pinsker=pinsker_bound(kl_divergence(g, scn.n_obs)) if mode is Mode.MULTI else None,
            )
            report.entries.append(entry)

    logger.info(
        "Covertness check (%s, %d samples): max gamma/gamma_max=%.9f, min DEP=%.6f",
        mode.value,
        samples,
        report.max_ratio,
        report.min_dep,
    )
    return report
