"""Line-of-sight channel gains, user rates and warden SINRs."""

import logging
from typing import Sequence

import numpy as np

from .errors import DegenerateGeometry, ValidationError
from .models.scenario import Scenario
from .models.trajectory import SlotState, Trajectory

logger = logging.getLogger(__name__)

# Per-slot displacement slack (meters) when validating trajectories.
STEP_SLACK = 1e-9


def gain_sq(q_tx: Sequence[float], alt: float, q_rx: Sequence[float], ref_gain: float) -> float:
    """|h|² = ρ₀ / (‖q_tx − q_rx‖² + alt²)."""
    dx = float(q_tx[0]) - float(q_rx[0])
    dy = float(q_tx[1]) - float(q_rx[1])
    distance_sq = dx * dx + dy * dy + alt * alt
    if distance_sq <= 0.0:
        raise DegenerateGeometry(
            "transmitter and receiver coincide", q_tx=list(q_tx), q_rx=list(q_rx), alt=alt
        )
    return ref_gain / distance_sq


def gain_sq_array(q_tx: np.ndarray, alt: float, q_rx: np.ndarray, ref_gain: float) -> np.ndarray:
    """Broadcasting form of gain_sq over trailing coordinate axes."""
    distance_sq = np.sum((np.asarray(q_tx) - np.asarray(q_rx)) ** 2, axis=-1) + alt * alt
    if np.any(distance_sq <= 0.0):
        raise DegenerateGeometry("transmitter and receiver coincide", alt=alt)
    return ref_gain / distance_sq


def user_rate(state: SlotState, user: Sequence[float], scn: Scenario) -> float:
    """Achievable rate of a ground user in one slot (bits/s/Hz)."""
    gain = gain_sq(state.q_s, scn.s_alt, user, scn.ref_gain)
    return float(np.log2(1.0 + state.p_s * gain / scn.noise_power))


def slot_rates(traj: Trajectory, scn: Scenario) -> np.ndarray:
    """Rates of every user in every slot, shape (n_slots, n_users)."""
    users = np.asarray(scn.users, dtype=float)
    gains = gain_sq_array(traj.q_s[:, None, :], scn.s_alt, users[None, :, :], scn.ref_gain)
    return np.log2(1.0 + traj.p_s[:, None] * gains / scn.noise_power)


def min_avg_rate(traj: Trajectory, scn: Scenario) -> float:
    """Smallest time-averaged user rate, averaged over all slots of the trajectory."""
    return float(slot_rates(traj, scn).mean(axis=0).min())


def warden_sinr_single(state: SlotState, warden_pos: Sequence[float], scn: Scenario) -> float:
    """γ₁ = P_S|h_SW|² / (P_J|h_JW|² + σ²) at the given warden position."""
    if state.p_s == 0.0:
        return 0.0
    g_sw = gain_sq(state.q_s, scn.s_alt, warden_pos, scn.ref_gain)
    g_jw = gain_sq(state.q_j, scn.j_alt, warden_pos, scn.ref_gain)
    return state.p_s * g_sw / (scn.p_jam * g_jw + scn.noise_power)


def warden_sinr_multi(state: SlotState, warden_pos: Sequence[float], scn: Scenario) -> float:
    """γ₂ = P_S·K|h_SW|² / (σ² + P_J·K|h_JW|²) for a K-antenna warden."""
    if state.p_s == 0.0:
        return 0.0
    k = scn.n_antennas
    g_sw = gain_sq(state.q_s, scn.s_alt, warden_pos, scn.ref_gain)
    g_jw = gain_sq(state.q_j, scn.j_alt, warden_pos, scn.ref_gain)
    return state.p_s * k * g_sw / (scn.noise_power + scn.p_jam * k * g_jw)


def warden_sinr_array(
    q_s: np.ndarray,
    q_j: np.ndarray,
    p_s: np.ndarray,
    warden_pos: np.ndarray,
    scn: Scenario,
    n_antennas: int = 1,
) -> np.ndarray:
    """Vectorized γ₁ (n_antennas=1) or γ₂ over broadcast slot/sample axes."""
    g_sw = gain_sq_array(q_s, scn.s_alt, warden_pos, scn.ref_gain)
    g_jw = gain_sq_array(q_j, scn.j_alt, warden_pos, scn.ref_gain)
    k = float(n_antennas)
    return p_s * k * g_sw / (scn.noise_power + scn.p_jam * k * g_jw)


def validate_trajectory(
    traj: Trajectory, scn: Scenario, tol: float = STEP_SLACK, jammer_endpoints: bool = True
) -> None:
    """Check slot count, power box, endpoints and per-slot flight distance.

    A hovering jammer (``jammer_endpoints=False``) is exempt from its take-off
    and landing points but not from its speed limit. Raises ValidationError
    naming the first violated quantity.
    """
    if traj.n_slots != scn.n_slots:
        raise ValidationError(
            f"trajectory has {traj.n_slots} slots, scenario expects {scn.n_slots}",
            field="n_slots",
        )
    if np.any(traj.p_s < -tol) or np.any(traj.p_s > scn.p_max * (1.0 + 1e-9) + tol):
        raise ValidationError("transmit power outside [0, p_max]", field="p_s")

    for name, path, start, end, step in (
        ("q_s", traj.q_s, scn.s_start, scn.s_end, scn.s_step),
        ("q_j", traj.q_j, scn.j_start, scn.j_end, scn.j_step),
    ):
        pinned = name == "q_s" or jammer_endpoints
        if pinned and np.linalg.norm(path[0] - np.asarray(start)) > tol:
            raise ValidationError(f"{name} does not start at its take-off point", field=name)
        if pinned and np.linalg.norm(path[-1] - np.asarray(end)) > tol:
            raise ValidationError(f"{name} does not end at its landing point", field=name)
        steps = np.linalg.norm(np.diff(path, axis=0), axis=1)
        worst = int(np.argmax(steps))
        if steps[worst] > step + tol:
            raise ValidationError(
                f"{name} moves {steps[worst]:.6f} m between slots {worst} and {worst + 1}, "
                f"limit {step:.6f} m",
                field=name,
                slot=worst,
            )
