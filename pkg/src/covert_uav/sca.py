"""Convex SCA subproblems for the joint trajectory and power design.

Each subproblem is built around a feasible Iterate. Non-convex terms are
replaced by tangent surrogates taken at the iterate:

* user rates by a concave lower bound (log of the received-power slack minus
  the tangent of the log-distance),
* ln(P_S) by its tangent (over-estimator),
* 1/c by its tangent (under-estimator),
* the squared S-warden distance by its tangent (under-estimator),

and the worst case over each warden's uncertainty disc is handled exactly
with the S-procedure, reduced from a 3×3 LMI to a rotated cone.

Inside the program lengths are in units of ``LENGTH_UNIT`` meters and power
in units of P_max; interference slacks are normalized by the jamming power
received at one length unit.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Union

import cvxpy as cp
import numpy as np

from .conic import ConstraintHandle, ConvexProgram, SolveOutcome
from .detection import gamma_cap
from .errors import LinearizationError, ModeError
from .models.scenario import Scenario
from .models.trajectory import Bench, Iterate, Mode, Trajectory

logger = logging.getLogger(__name__)

LENGTH_UNIT = 100.0

V_FLOOR = 1e-6
B_FLOOR_FRACTION = 0.5

# Multipliers above this mark a covertness cap as binding.
ACTIVE_DUAL_TOL = 1e-6

# Fraction of P_max below which iterate powers are lifted (capped by the
# always-covert power so the lifted point stays feasible).
POWER_FLOOR_FRACTION = 1e-6

# Per-slot flight distance kept this far (m) below the speed limit.
SPEED_MARGIN = 1e-7

LN2 = math.log(2.0)


# Tangent surrogates in natural units


def rate_bound_value(p_s, d, d_l, gamma0: float):
    """Concave lower bound of log2(1 + γ₀P_S/d), tangent at d = d_l (bits/s/Hz)."""
    d_l = np.asarray(d_l, dtype=float)
    if np.any(d_l <= 0.0):
        raise LinearizationError("rate linearization point must be positive", d_l=d_l.tolist())
    p_s, d = np.asarray(p_s, dtype=float), np.asarray(d, dtype=float)
    return np.log2(gamma0 * p_s + d) - np.log2(d_l) - (d - d_l) / (d_l * LN2)


def log_power_tangent(p_s, p_l, ref_gain: float):
    """A(P_S) = ln(ρ₀P^l) + (P_S − P^l)/P^l, an over-estimator of ln(ρ₀P_S)."""
    p_l = np.asarray(p_l, dtype=float)
    if np.any(p_l <= 0.0):
        raise LinearizationError("power linearization point must be positive", p_l=p_l.tolist())
    return np.log(ref_gain * p_l) + (np.asarray(p_s, dtype=float) - p_l) / p_l


def inverse_tangent(c, c_l):
    """B(c) = 1/c^l − (c − c^l)/(c^l)², an under-estimator of 1/c."""
    c_l = np.asarray(c_l, dtype=float)
    if np.any(c_l <= 0.0):
        raise LinearizationError("distance linearization point must be positive", c_l=c_l.tolist())
    return 1.0 / c_l - (np.asarray(c, dtype=float) - c_l) / (c_l * c_l)


def distance_sq_tangent(q, q_l, w_hat):
    """C(q) = ‖q^l − ŵ‖² + 2(q^l − ŵ)ᵀ(q − q^l), an under-estimator of ‖q − ŵ‖²."""
    q, q_l, w_hat = (np.asarray(v, dtype=float) for v in (q, q_l, w_hat))
    offset = q_l - w_hat
    return np.sum(offset * offset, axis=-1) + 2.0 * np.sum(offset * (q - q_l), axis=-1)


def worst_case_sq_distance(q, w_hat, radius, alt: float):
    """Smallest squared 3-D distance from q (at altitude alt) to the disc around ŵ."""
    gap = np.maximum(np.linalg.norm(np.asarray(q) - np.asarray(w_hat), axis=-1) - radius, 0.0)
    return gap * gap + alt * alt


def inflated_sq_distance(q, w_hat, radius, alt: float):
    """Triangle-inequality bound (‖q − ŵ‖ + r)² + alt² on the farthest squared distance."""
    reach = np.linalg.norm(np.asarray(q) - np.asarray(w_hat), axis=-1) + radius
    return reach * reach + alt * alt


def sprocedure_multiplier(q, w_hat, radius):
    """Multiplier θ making the S-procedure cone tight at the worst-case distance."""
    if radius <= 0.0:
        return np.zeros(np.shape(q)[:-1])
    dist = np.linalg.norm(np.asarray(q) - np.asarray(w_hat), axis=-1)
    return np.maximum(dist / radius - 1.0, 0.0)


def sprocedure_lmi(q, w_hat, radius, theta, v, q_l, alt: float) -> np.ndarray:
    """The 3×3 robust-distance matrix whose positive semidefiniteness the cone encodes."""
    x = np.asarray(q, dtype=float) - np.asarray(w_hat, dtype=float)
    corner = distance_sq_tangent(q, q_l, w_hat) + alt * alt - v - theta * radius**2
    matrix = np.empty((3, 3))
    matrix[:2, :2] = (1.0 + theta) * np.eye(2)
    matrix[:2, 2] = x
    matrix[2, :2] = x
    matrix[2, 2] = corner
    return matrix


# Scaling and covert-power limits


def _columns(vector, width: int):
    """Repeat an (n,) expression into (n, width) columns."""
    n = vector.shape[0]
    return cp.reshape(vector, (n, 1), order="F") @ np.ones((1, width))


@dataclass(frozen=True)
class Scaling:
    """Unit conversions and constant coefficients of one subproblem."""

    length: float
    power: float
    rate_gain: float
    interference_unit: float
    b_coef: float
    b_const: float
    cap_const: float
    n_antennas: int
    gamma_max: float

    @classmethod
    def build(cls, scn: Scenario, mode: Mode, gamma_max: float) -> "Scaling":
        if scn.p_max <= 0.0 or scn.ref_gain <= 0.0:
            raise LinearizationError("p_max and ref_gain must be positive to optimize power")
        if gamma_max <= 0.0:
            raise LinearizationError("covert SINR cap must be positive", gamma_max=gamma_max)
        length = LENGTH_UNIT
        k = scn.n_antennas if mode is Mode.MULTI else 1
        unit = scn.noise_power + scn.ref_gain * scn.p_jam / length**2
        return cls(
            length=length,
            power=scn.p_max,
            rate_gain=scn.gamma0 * scn.p_max / length**2,
            interference_unit=unit,
            b_coef=scn.ref_gain * scn.p_jam / (length**2 * unit),
            b_const=scn.noise_power / unit,
            cap_const=math.log(gamma_max * unit * length**2 / (scn.ref_gain * scn.p_max)),
            n_antennas=k,
            gamma_max=gamma_max,
        )


def covert_power_limit(
    scn: Scenario, q_s: np.ndarray, q_j: np.ndarray, gamma_max: float, n_antennas: int = 1
) -> np.ndarray:
    """Largest per-slot power meeting the covert cap at every warden's worst-case point.

    Uses the same bounds as the subproblem: nearest disc point for S, the
    triangle-inequality distance for J.
    """
    limit = np.full(q_s.shape[0], np.inf)
    k = float(n_antennas)
    for warden in scn.wardens:
        v = worst_case_sq_distance(q_s, warden.est_pos, warden.radius, scn.s_alt)
        c = inflated_sq_distance(q_j, warden.est_pos, warden.radius, scn.j_alt)
        interference = scn.noise_power + k * scn.ref_gain * scn.p_jam / c
        limit = np.minimum(limit, gamma_max * v * interference / (scn.ref_gain * k))
    return limit


def power_floor(scn: Scenario, gamma_max: float, n_antennas: int = 1) -> float:
    """Power that is covert for every geometry, capped at a small fraction of P_max."""
    always_covert = gamma_max * scn.noise_power * scn.s_alt**2 / (scn.ref_gain * n_antennas)
    return min(POWER_FLOOR_FRACTION * scn.p_max, always_covert)


def tight_slacks(scn: Scenario, traj: Trajectory):
    """Rate and jammer-distance slacks that hold with equality on a trajectory."""
    users = np.asarray(scn.users, dtype=float)
    d = np.sum((traj.q_s[:, None, :] - users[None, :, :]) ** 2, axis=-1) + scn.s_alt**2
    c = np.stack(
        [inflated_sq_distance(traj.q_j, w.est_pos, w.radius, scn.j_alt) for w in scn.wardens],
        axis=1,
    )
    return d, c


# Subproblem


@dataclass
class Subproblem:
    """An assembled SCA subproblem and the maps between its units and the scenario's."""

    program: ConvexProgram
    scenario: Scenario
    iterate: Iterate
    mode: Mode
    bench: Bench
    scaling: Scaling
    fixed: Dict[str, np.ndarray] = field(default_factory=dict)
    cap: Optional[ConstraintHandle] = None

    def iterate_point(self) -> Dict[str, np.ndarray]:
        """The incumbent iterate, with tight slacks, as a program assignment."""
        scn, it, s = self.scenario, self.iterate, self.scaling
        L = s.length
        traj = it.traj
        q_s, q_j = traj.q_s, traj.q_j
        p = traj.p_s / s.power
        d = it.d_prev / L**2
        c = it.c_prev / L**2
        tau = np.log(s.rate_gain * p[:, None] + d)
        rates = (tau - np.log(d)) / LN2
        point: Dict[str, np.ndarray] = {
            "p": p,
            "eta": np.array(float(np.min(rates.mean(axis=0)))),
            "d": d,
            "tau": tau,
            "c": c,
        }
        if self.bench is not Bench.B1_FIXED_S:
            point["q_s"] = q_s / L
        if self.bench is Bench.B3_HOVER_J:
            point["hover"] = q_j[0] / L
        elif self.bench is not Bench.B2_FIXED_J:
            point["q_j"] = q_j / L

        t_j, v, theta = [], [], []
        for w in scn.wardens:
            t_j.append(np.linalg.norm(q_j - np.asarray(w.est_pos), axis=1) / L)
            v.append(worst_case_sq_distance(q_s, w.est_pos, w.radius, scn.s_alt) / L**2)
            theta.append(sprocedure_multiplier(q_s, w.est_pos, w.radius))
        b = s.b_coef * s.n_antennas / c + s.b_const
        v_arr = np.maximum(np.stack(v, axis=1), V_FLOOR)
        point.update(
            t_j=np.stack(t_j, axis=1),
            b=b,
            v=v_arr,
            theta=np.stack(theta, axis=1),
            t_b=np.log(b),
            t_v=np.log(v_arr),
        )
        return point

    def check_iterate(self):
        """Worst relative violation of the incumbent in this subproblem."""
        return self.program.max_residual(self.iterate_point())

    def active_caps(self, outcome: SolveOutcome, tol: float = ACTIVE_DUAL_TOL) -> int:
        """Covertness caps (slot, warden) whose multiplier exceeds ``tol``."""
        if self.cap is None:
            return 0
        return int(np.count_nonzero(outcome.dual(self.cap) > tol))

    def extract(self, outcome: SolveOutcome) -> Iterate:
        """Next Iterate (natural units) from an optimal outcome."""
        scn, s = self.scenario, self.scaling
        L = s.length
        n = scn.n_slots
        if self.bench is Bench.B1_FIXED_S:
            q_s = self.iterate.traj.q_s.copy()
        else:
            q_s = outcome.value("q_s") * L
            q_s[0], q_s[-1] = scn.s_start, scn.s_end
        if self.bench is Bench.B2_FIXED_J:
            q_j = self.iterate.traj.q_j.copy()
        elif self.bench is Bench.B3_HOVER_J:
            q_j = np.tile(outcome.value("hover") * L, (n, 1))
        else:
            q_j = outcome.value("q_j") * L
            q_j[0], q_j[-1] = scn.j_start, scn.j_end

        floor = power_floor(scn, s.gamma_max, s.n_antennas)
        p_s = np.clip(outcome.value("p") * s.power, floor, scn.p_max)
        traj = Trajectory(q_s=q_s, q_j=q_j, p_s=p_s)

        d_tight, c_tight = tight_slacks(scn, traj)
        d_prev = np.maximum(outcome.value("d") * L**2, d_tight)
        c_prev = np.maximum(outcome.value("c") * L**2, c_tight)
        return Iterate(traj=traj, d_prev=d_prev, c_prev=c_prev, objective=float(outcome.value("eta")))


class SubproblemBuilder:
    """Emits the rows of one subproblem into a ConvexProgram."""

    def __init__(self, scn: Scenario, it: Iterate, mode: Mode, bench: Bench, scaling: Scaling):
        self.scn = scn
        self.it = it
        self.mode = mode
        self.bench = bench
        self.s = scaling
        self.program = ConvexProgram(name=f"sca-{mode.value}-{bench.value}")
        self.n = scn.n_slots
        L = scaling.length
        self.users = np.asarray(scn.users, dtype=float) / L
        self.w_hat = np.asarray([w.est_pos for w in scn.wardens], dtype=float) / L
        self.radius = np.asarray([w.radius for w in scn.wardens], dtype=float) / L
        self.h_s = scn.s_alt / L
        self.h_j = scn.j_alt / L
        self.fixed: Dict[str, np.ndarray] = {}
        self.cap: Optional[ConstraintHandle] = None

    def declare(self) -> None:
        prog, n = self.program, self.n
        n_users, n_wardens = len(self.users), len(self.w_hat)
        L = self.s.length

        self.p = prog.add_variable("p", n, lb=0.0, ub=1.0)
        self.eta = prog.add_variable("eta")

        if self.bench is Bench.B1_FIXED_S:
            self.q_s = self.fixed["q_s"] = self.it.traj.q_s / L
        else:
            self.q_s = prog.add_variable("q_s", (n, 2))

        if self.bench is Bench.B2_FIXED_J:
            self.q_j = self.fixed["q_j"] = self.it.traj.q_j / L
        elif self.bench is Bench.B3_HOVER_J:
            hover = prog.add_variable("hover", 2)
            self.q_j = np.ones((n, 1)) @ cp.reshape(hover, (1, 2), order="F")
        else:
            self.q_j = prog.add_variable("q_j", (n, 2))

        self.d = prog.add_variable("d", (n, n_users))
        self.tau = prog.add_variable("tau", (n, n_users))
        self.c = prog.add_variable("c", (n, n_wardens), lb=self.h_j**2)
        self.t_j = prog.add_variable("t_j", (n, n_wardens))
        self.b = prog.add_variable(
            "b", (n, n_wardens), lb=B_FLOOR_FRACTION * self.scn.noise_power / self.s.interference_unit
        )
        self.v = prog.add_variable("v", (n, n_wardens), lb=V_FLOOR)
        self.theta = prog.add_variable("theta", (n, n_wardens), lb=0.0)
        self.t_b = prog.add_variable("t_b", (n, n_wardens))
        self.t_v = prog.add_variable("t_v", (n, n_wardens))

    def rate_lower_bound(self) -> None:
        """Average-rate epigraph rows: mean_n R^L_k(n) ≥ η for every user k."""
        prog, n = self.program, self.n
        d_l = self.it.d_prev / self.s.length**2
        if np.any(d_l <= 0.0):
            raise LinearizationError("rate slack iterate must be positive")
        prog.add_log_epigraph(
            self.tau, self.s.rate_gain * _columns(self.p, d_l.shape[1]) + self.d, name="rate.log"
        )
        tangent = np.log(d_l) + cp.multiply(1.0 / d_l, self.d - d_l)
        avg = cp.sum(self.tau - tangent, axis=0) / (n * LN2)
        prog.add_affine(avg, ">=", self.eta * np.ones(d_l.shape[1]), name="rate.avg")
        for k, user in enumerate(self.users):
            prog.add_rsoc(self.q_s - user, 0.5, self.d[:, k] - self.h_s**2, name=f"rate.dist[{k}]")

    def linearize_log_power(self):
        """Affine A(n) − ln(ρ₀P_max): tangent of ln p at the iterate power (scaled)."""
        p_l = self.it.traj.p_s / self.s.power
        if np.any(p_l <= 0.0):
            raise LinearizationError("iterate power must be positive", slots=np.flatnonzero(p_l <= 0).tolist())
        return np.log(p_l) + cp.multiply(1.0 / p_l, self.p - p_l)

    def linearize_inverse(self):
        """Affine B(n) under-estimating 1/c at the iterate slack (scaled)."""
        c_l = self.it.c_prev / self.s.length**2
        if np.any(c_l <= 0.0):
            raise LinearizationError("jammer distance iterate must be positive")
        return 1.0 / c_l - cp.multiply(1.0 / c_l**2, self.c - c_l)

    def jammer_distance_inflation(self) -> None:
        """t ≥ ‖q_J − ŵ‖ and c ≥ (t + r)² + H_J² for every warden."""
        prog = self.program
        for m, (w_hat, r) in enumerate(zip(self.w_hat, self.radius)):
            prog.add_soc(self.q_j - w_hat, self.t_j[:, m], name=f"jam.dist[{m}]")
            prog.add_rsoc(
                cp.reshape(self.t_j[:, m] + r, (self.n, 1), order="F"),
                0.5,
                self.c[:, m] - self.h_j**2,
                name=f"jam.inflate[{m}]",
            )

    def interference_bound(self) -> None:
        """b ≤ ρ₀P_J·K·B(c) + σ², in interference units."""
        bound = self.s.b_coef * self.s.n_antennas * self.linearize_inverse() + self.s.b_const
        self.program.add_affine(self.b, "<=", bound, name="interference")

    def sprocedure_schur(self) -> None:
        """Worst case over each disc: ‖q_S − ŵ‖²/(1+θ) ≤ C + H_S² − v − θr²."""
        prog = self.program
        q_l = self.it.traj.q_s / self.s.length
        for m, (w_hat, r) in enumerate(zip(self.w_hat, self.radius)):
            offset = q_l - w_hat
            tangent = np.sum(offset * offset, axis=1) + cp.sum(cp.multiply(2.0 * offset, self.q_s - q_l), axis=1)
            prog.add_rsoc(
                self.q_s - w_hat,
                (1.0 + self.theta[:, m]) / 2.0,
                tangent + self.h_s**2 - self.v[:, m] - r * r * self.theta[:, m],
                name=f"sproc[{m}]",
            )

    def covert_cap(self) -> None:
        """A(n) + ln K ≤ ln(γ_max) + ln b + ln v, for every slot and warden."""
        prog = self.program
        prog.add_log_epigraph(self.t_b, self.b, name="cap.log_b")
        prog.add_log_epigraph(self.t_v, self.v, name="cap.log_v")
        lhs = _columns(self.linearize_log_power(), len(self.w_hat))
        lhs = lhs + math.log(self.s.n_antennas)
        self.cap = prog.add_affine(lhs, "<=", self.s.cap_const + self.t_b + self.t_v, name="cap")

    def flight(self) -> None:
        """Endpoints and per-slot flight distance."""
        prog, scn, L = self.program, self.scn, self.s.length
        if self.bench is not Bench.B1_FIXED_S:
            s_reach = np.full(self.n - 1, max(scn.s_step - SPEED_MARGIN, 0.0) / L)
            prog.add_affine(self.q_s[0], "==", np.asarray(scn.s_start) / L, name="s.start")
            prog.add_affine(self.q_s[self.n - 1], "==", np.asarray(scn.s_end) / L, name="s.end")
            prog.add_soc(self.q_s[1:] - self.q_s[:-1], s_reach, name="s.speed")
        if self.bench is Bench.PROPOSED or self.bench is Bench.B1_FIXED_S:
            j_reach = np.full(self.n - 1, max(scn.j_step - SPEED_MARGIN, 0.0) / L)
            prog.add_affine(self.q_j[0], "==", np.asarray(scn.j_start) / L, name="j.start")
            prog.add_affine(self.q_j[self.n - 1], "==", np.asarray(scn.j_end) / L, name="j.end")
            prog.add_soc(self.q_j[1:] - self.q_j[:-1], j_reach, name="j.speed")

    def build(self) -> ConvexProgram:
        self.declare()
        self.rate_lower_bound()
        self.jammer_distance_inflation()
        self.interference_bound()
        self.sprocedure_schur()
        self.covert_cap()
        self.flight()
        self.program.maximize(self.eta)
        return self.program


def _check_consistent(scn: Scenario, it: Iterate, bench: Bench) -> None:
    n = scn.n_slots
    shapes = {
        "q_s": (it.traj.q_s.shape, (n, 2)),
        "q_j": (it.traj.q_j.shape, (n, 2)),
        "d_prev": (it.d_prev.shape, (n, scn.n_users)),
        "c_prev": (it.c_prev.shape, (n, scn.n_wardens)),
    }
    for name, (got, want) in shapes.items():
        if got != want:
            raise ModeError(f"iterate {name} has shape {got}, scenario needs {want}", field=name)
    if bench is Bench.B3_HOVER_J and np.ptp(it.traj.q_j, axis=0).max() > 1e-9:
        raise ModeError("hovering-jammer benchmark needs a stationary jammer iterate")


def assemble_subproblem(
    scn: Scenario,
    it: Iterate,
    mode: Union[Mode, str] = Mode.SINGLE,
    bench: Union[Bench, str] = Bench.PROPOSED,
    gamma_max: Optional[float] = None,
) -> Subproblem:
    """Build the convex subproblem around ``it``.

    ``gamma_max`` defaults to the cap of the warden model selected by ``mode``.
    """
    mode = Mode(mode)
    bench = bench if isinstance(bench, Bench) else Bench.parse(bench)
    _check_consistent(scn, it, bench)
    if gamma_max is None:
        gamma_max = gamma_cap(mode, scn.epsilon, scn.n_obs)
    scaling = Scaling.build(scn, mode, gamma_max)
    builder = SubproblemBuilder(scn, it, mode, bench, scaling)
    program = builder.build()
    logger.debug("Assembled %s: %s", program.name, program.census())
    return Subproblem(
        program=program,
        scenario=scn,
        iterate=it,
        mode=mode,
        bench=bench,
        scaling=scaling,
        fixed=builder.fixed,
        cap=builder.cap,
    )
