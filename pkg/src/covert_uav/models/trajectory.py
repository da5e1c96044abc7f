"""Trajectory, iterate and result containers."""

from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .scenario import Point


class Mode(str, Enum):
    """Warden receiver model."""

    SINGLE = "single"
    MULTI = "multi"


class Bench(str, Enum):
    """Optimization scheme: the joint design or one of the reduced benchmarks."""

    PROPOSED = "proposed"
    B1_FIXED_S = "b1"
    B2_FIXED_J = "b2"
    B3_HOVER_J = "b3"

    @classmethod
    def parse(cls, value: str) -> "Bench":
        aliases = {"b1_fixed_s": "b1", "b2_fixed_j": "b2", "b3_hover_j": "b3"}
        return cls(aliases.get(value.lower(), value.lower()))


class Status(str, Enum):
    CONVERGED = "converged"
    MAX_ITER = "max_iter"
    SUBPROBLEM_FAILURE = "subproblem_failure"


class SlotState(BaseModel):
    """Positions of S and J and the transmit power of S in one slot."""

    model_config = ConfigDict(frozen=True)

    q_s: Point
    q_j: Point
    p_s: float = Field(ge=0.0)


@dataclass(frozen=True)
class Trajectory:
    """Per-slot positions (N×2 arrays, meters) and powers (N, watts)."""

    q_s: np.ndarray
    q_j: np.ndarray
    p_s: np.ndarray

    def __post_init__(self) -> None:
        for name in ("q_s", "q_j", "p_s"):
            array = np.array(getattr(self, name), dtype=float)
            array.setflags(write=False)
            object.__setattr__(self, name, array)
        n = self.p_s.shape[0]
        if self.q_s.shape != (n, 2) or self.q_j.shape != (n, 2) or self.p_s.ndim != 1:
            raise ValueError(
                f"inconsistent trajectory shapes q_s={self.q_s.shape} "
                f"q_j={self.q_j.shape} p_s={self.p_s.shape}"
            )

    @property
    def n_slots(self) -> int:
        return int(self.p_s.shape[0])

    @property
    def slots(self) -> List[SlotState]:
        return [self.slot(n) for n in range(self.n_slots)]

    def slot(self, n: int) -> SlotState:
        return SlotState(
            q_s=(float(self.q_s[n, 0]), float(self.q_s[n, 1])),
            q_j=(float(self.q_j[n, 0]), float(self.q_j[n, 1])),
            p_s=float(self.p_s[n]),
        )

    @classmethod
    def from_slots(cls, slots: Sequence[SlotState]) -> "Trajectory":
        return cls(
            q_s=np.array([s.q_s for s in slots], dtype=float).reshape(-1, 2),
            q_j=np.array([s.q_j for s in slots], dtype=float).reshape(-1, 2),
            p_s=np.array([s.p_s for s in slots], dtype=float),
        )

    def with_power(self, p_s: np.ndarray) -> "Trajectory":
        return Trajectory(q_s=self.q_s, q_j=self.q_j, p_s=p_s)


@dataclass(frozen=True)
class Iterate:
    """Feasible point at which an SCA subproblem is linearized.

    ``d_prev`` has one column per user, ``c_prev`` one column per warden
    (both N×·, squared meters).
    """

    traj: Trajectory
    d_prev: np.ndarray
    c_prev: np.ndarray
    objective: float = 0.0

    def __post_init__(self) -> None:
        for name in ("d_prev", "c_prev"):
            array = np.array(getattr(self, name), dtype=float)
            array.setflags(write=False)
            object.__setattr__(self, name, array)


class CovertEntry(BaseModel):
    """Worst sampled warden position for one (slot, warden) pair."""

    slot: int
    warden: int
    max_ratio: float
    min_dep: float
    worst_x: float
    worst_y: float
    pinsker: Optional[float] = None


class CovertReport(BaseModel):
    """Robust covertness check of a solved trajectory."""

    mode: Mode
    gamma_max: float
    samples: int
    entries: List[CovertEntry] = Field(default_factory=list)

    @property
    def max_ratio(self) -> float:
        return max((e.max_ratio for e in self.entries), default=0.0)

    @property
    def min_dep(self) -> float:
        return min((e.min_dep for e in self.entries), default=1.0)

    def ok(self, tol: float = 1e-6) -> bool:
        return self.max_ratio <= 1.0 + tol


class IterationRecord(BaseModel):
    """One line of the SCA trace."""

    iteration: int
    objective: float
    min_avg_rate: float
    improvement: Optional[float] = None
    solver_status: str
    wall_seconds: float
    active_caps: Optional[int] = None


@dataclass
class SolveResult:
    """Outcome of one SCA run."""

    final: Iterate
    trace: List[float]
    status: Status
    mode: Mode
    bench: Bench
    records: List[IterationRecord] = field(default_factory=list)
    rates: Optional[np.ndarray] = None
    covert_report: Optional[CovertReport] = None
    wall_seconds: float = 0.0

    @property
    def trajectory(self) -> Trajectory:
        return self.final.traj

    @property
    def iterations(self) -> int:
        return len(self.trace) - 1

    @property
    def min_avg_rate(self) -> float:
        if self.rates is None:
            return float("nan")
        return float(self.rates.mean(axis=0).min())

    @property
    def avg_power(self) -> float:
        return float(self.final.traj.p_s.mean())

    def avg_rates(self) -> Tuple[float, ...]:
        if self.rates is None:
            return ()
        return tuple(float(r) for r in self.rates.mean(axis=0))
