"""Scenario documents: loading, validation, reference defaults."""

import io
import logging
import math
import re
from enum import Enum
from typing import Any, Dict, List, Tuple, Union

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from pydantic import ValidationError as PydanticValidationError

from ..errors import ParseError, ReachabilityError, ValidationError
from ..utils import stable_hash

logger = logging.getLogger(__name__)

Point = Tuple[float, float]

# Displacement slack when checking reachability and flight steps (meters).
DISTANCE_SLACK = 1e-9

_LINE = re.compile(r"^\s*(export\s+)?[A-Za-z_][A-Za-z0-9_]*\s*=")


def db_to_linear(value_db: float) -> float:
    """Convert decibels to a linear power ratio."""
    return 10.0 ** (value_db / 10.0)


def dbm_to_watts(value_dbm: float) -> float:
    """Convert dBm to watts."""
    return db_to_linear(value_dbm - 30.0)


def _parse_point(value: Any) -> Point:
    if isinstance(value, str):
        parts = [p for p in re.split(r"[,\s]+", value.strip()) if p]
    else:
        parts = list(value)
    if len(parts) != 2:
        raise ValueError(f"expected an 'x,y' pair, got {value!r}")
    return float(parts[0]), float(parts[1])


def _split_rows(value: str) -> List[str]:
    return [row.strip() for row in value.split(";") if row.strip()]


class Variant(str, Enum):
    """Warden layouts of the two reference scenarios."""

    SCENARIO1 = "scenario1"
    SCENARIO2 = "scenario2"


class Warden(BaseModel):
    """Estimated warden position and uncertainty radius (meters)."""

    model_config = ConfigDict(frozen=True)

    est_pos: Point
    radius: float = Field(ge=0.0)

    @field_validator("est_pos", mode="before")
    @classmethod
    def _point(cls, value: Any) -> Point:
        return _parse_point(value)


class Scenario(BaseModel):
    """All physical parameters of one covert-transmission scenario, linear SI units."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    n_slots: int = Field(ge=2)
    slot_seconds: float = Field(gt=0.0)
    s_alt: float = Field(ge=0.0)
    j_alt: float = Field(ge=0.0)
    s_start: Point
    s_end: Point
    j_start: Point
    j_end: Point
    users: Tuple[Point, ...] = Field(min_length=1)
    wardens: Tuple[Warden, ...] = Field(min_length=1)
    p_max: float = Field(ge=0.0)
    p_jam: float = Field(ge=0.0)
    noise_power: float = Field(gt=0.0)
    ref_gain: float = Field(ge=0.0)
    epsilon: float = Field(gt=0.0, lt=1.0)
    n_obs: int = Field(ge=1)
    n_antennas: int = Field(ge=1)
    sca_tol: float = Field(gt=0.0)
    s_vmax: float = Field(ge=0.0)
    j_vmax: float = Field(ge=0.0)

    @field_validator("s_start", "s_end", "j_start", "j_end", mode="before")
    @classmethod
    def _point(cls, value: Any) -> Point:
        return _parse_point(value)

    @field_validator("users", mode="before")
    @classmethod
    def _users(cls, value: Any) -> Tuple[Point, ...]:
        if isinstance(value, str):
            return tuple(_parse_point(row) for row in _split_rows(value))
        return tuple(_parse_point(row) for row in value)

    @field_validator("wardens", mode="before")
    @classmethod
    def _wardens(cls, value: Any) -> Tuple[Any, ...]:
        if not isinstance(value, str):
            return tuple(value)
        wardens = []
        for row in _split_rows(value):
            parts = [p for p in re.split(r"[,\s]+", row) if p]
            if len(parts) != 3:
                raise ValueError(f"expected 'x,y,radius' per warden, got {row!r}")
            wardens.append({"est_pos": (parts[0], parts[1]), "radius": parts[2]})
        return tuple(wardens)

    @model_validator(mode="after")
    def _reachable(self) -> "Scenario":
        for name, start, end, vmax in (
            ("s", self.s_start, self.s_end, self.s_vmax),
            ("j", self.j_start, self.j_end, self.j_vmax),
        ):
            distance = math.dist(start, end)
            budget = vmax * self.slot_seconds * (self.n_slots - 1)
            if distance > budget + DISTANCE_SLACK:
                raise ReachabilityError(
                    f"{name}_end is {distance:.3f} m from {name}_start but at most "
                    f"{budget:.3f} m can be flown in {self.n_slots} slots",
                    field=f"{name}_end",
                    distance=distance,
                    budget=budget,
                )
        return self

    @property
    def gamma0(self) -> float:
        """Reference SNR ρ₀/σ² used by the rate surrogate."""
        return self.ref_gain / self.noise_power

    @property
    def s_step(self) -> float:
        """Largest per-slot displacement of the transmitter (m)."""
        return self.s_vmax * self.slot_seconds

    @property
    def j_step(self) -> float:
        """Largest per-slot displacement of the jammer (m)."""
        return self.j_vmax * self.slot_seconds

    @property
    def flight_seconds(self) -> float:
        return self.n_slots * self.slot_seconds

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def n_wardens(self) -> int:
        return len(self.wardens)

    def with_updates(self, **changes: Any) -> "Scenario":
        """Validated copy with some fields replaced."""
        data = self.model_dump()
        data.update(changes)
        return _validate(data)

    def scale_radii(self, factor: float) -> "Scenario":
        """Copy with every uncertainty radius multiplied by ``factor``."""
        wardens = [{"est_pos": w.est_pos, "radius": w.radius * factor} for w in self.wardens]
        return self.with_updates(wardens=wardens)

    def fingerprint(self) -> str:
        """Stable hash of the scenario content."""
        return stable_hash(self.model_dump(mode="json"))


_REFERENCE_WARDENS = {
    Variant.SCENARIO1: ((100.0, 0.0), (300.0, 100.0), (500.0, 0.0)),
    Variant.SCENARIO2: ((100.0, 100.0), (300.0, 0.0), (500.0, 100.0)),
}
_REFERENCE_RADII = (15.0, 30.0, 15.0)


def _reference(variant: Variant) -> Dict[str, Any]:
    return {
        "n_slots": 50,
        "slot_seconds": 2.0,
        "s_alt": 100.0,
        "j_alt": 70.0,
        "s_start": (-100.0, 100.0),
        "s_end": (700.0, 100.0),
        "j_start": (-100.0, 0.0),
        "j_end": (700.0, 0.0),
        "users": ((100.0, 200.0), (300.0, 300.0), (500.0, 200.0)),
        "wardens": tuple(
            {"est_pos": pos, "radius": r} for pos, r in zip(_REFERENCE_WARDENS[variant], _REFERENCE_RADII)
        ),
        "p_max": 0.2,
        "p_jam": 0.1,
        "noise_power": dbm_to_watts(-120.0),
        "ref_gain": db_to_linear(-30.0),
        "epsilon": 0.05,
        "n_obs": 30,
        "n_antennas": 1,
        "sca_tol": 1e-3,
        "s_vmax": 20.0,
        "j_vmax": 10.0,
    }


def default_scenario(variant: Union[Variant, str] = Variant.SCENARIO1) -> Scenario:
    """Reference scenario with the reference parameters."""
    return _validate(_reference(Variant(variant)))


def _validate(data: Dict[str, Any]) -> Scenario:
    try:
        return Scenario.model_validate(data)
    except PydanticValidationError as e:
        first = e.errors()[0]
        field = ".".join(str(part) for part in first["loc"]) or None
        raise ValidationError(f"invalid scenario field {field}: {first['msg']}", field=field) from e


# Keys accepted in scenario documents, besides the Scenario field names.
_LOG_KEYS = {
    "ref_gain_db": ("ref_gain", db_to_linear),
    "noise_power_dbm": ("noise_power", dbm_to_watts),
    "p_max_dbm": ("p_max", dbm_to_watts),
    "p_jam_dbm": ("p_jam", dbm_to_watts),
}
_META_KEYS = {"scenario", "flight_seconds"}


def _parse_document(document: str) -> Dict[str, str]:
    for lineno, line in enumerate(document.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if not _LINE.match(line):
            raise ParseError(f"line {lineno} is not a 'key = value' entry: {stripped!r}", line=lineno)
    raw = dotenv_values(stream=io.StringIO(document))
    values: Dict[str, str] = {}
    for key, value in raw.items():
        if value is None or value.strip() == "":
            raise ParseError(f"key {key!r} has no value", key=key)
        lowered = key.lower()
        if lowered in values:
            raise ParseError(f"key {lowered!r} given twice", key=lowered)
        values[lowered] = value.strip()
    return values


def load_scenario(document: str) -> Scenario:
    """Parse a flat ``key = value`` scenario document into a validated Scenario.

    Omitted keys take their reference value from the variant named by the
    ``scenario`` key (scenario1 when absent). Logarithmic keys (``*_db``,
    ``*_dbm``) are converted to linear SI values.
    """
    values = _parse_document(document)

    try:
        variant = Variant(values.pop("scenario", Variant.SCENARIO1.value).lower())
    except ValueError as e:
        raise ValidationError(str(e), field="scenario") from e
    data = _reference(variant)

    converted: Dict[str, Any] = {}
    for key, value in values.items():
        if key in _LOG_KEYS:
            target, convert = _LOG_KEYS[key]
            if target in values:
                raise ValidationError(f"both {target} and {key} given", field=target)
            converted[target] = convert(_as_float(key, value))
        elif key in Scenario.model_fields or key in _META_KEYS:
            converted[key] = value
        else:
            raise ValidationError(f"unknown scenario key {key!r}", field=key)

    flight = converted.pop("flight_seconds", None)
    if flight is not None:
        slot = _as_float("slot_seconds", converted.get("slot_seconds", data["slot_seconds"]))
        ratio = _as_float("flight_seconds", flight) / slot
        n_slots = int(round(ratio))
        if abs(ratio - n_slots) > 1e-9:
            raise ValidationError("flight_seconds is not a multiple of slot_seconds", field="flight_seconds")
        if "n_slots" in converted and int(converted["n_slots"]) != n_slots:
            raise ValidationError("n_slots disagrees with flight_seconds / slot_seconds", field="n_slots")
        converted["n_slots"] = n_slots

    data.update(converted)
    scenario = _validate(data)
    logger.debug("Loaded scenario %s (%d slots)", scenario.fingerprint()[:12], scenario.n_slots)
    return scenario


def _as_float(key: str, value: Any) -> float:
    try:
        number = float(value)
    except (TypeError, ValueError) as e:
        raise ValidationError(f"{key} must be a number, got {value!r}", field=key) from e
    if not math.isfinite(number):
        raise ValidationError(f"{key} must be finite", field=key)
    return number


def dump_scenario(scenario: Scenario) -> str:
    """Serialize a Scenario in the document format accepted by load_scenario."""

    def point(p: Point) -> str:
        return f"{p[0]!r},{p[1]!r}"

    lines = [
        f"n_slots = {scenario.n_slots}",
        f"slot_seconds = {scenario.slot_seconds!r}",
        f"s_alt = {scenario.s_alt!r}",
        f"j_alt = {scenario.j_alt!r}",
        f"s_start = {point(scenario.s_start)}",
        f"s_end = {point(scenario.s_end)}",
        f"j_start = {point(scenario.j_start)}",
        f"j_end = {point(scenario.j_end)}",
        f"users = {'; '.join(point(u) for u in scenario.users)}",
        "wardens = " + "; ".join(f"{point(w.est_pos)},{w.radius!r}" for w in scenario.wardens),
        f"p_max = {scenario.p_max!r}",
        f"p_jam = {scenario.p_jam!r}",
        f"noise_power = {scenario.noise_power!r}",
        f"ref_gain = {scenario.ref_gain!r}",
        f"epsilon = {scenario.epsilon!r}",
        f"n_obs = {scenario.n_obs}",
        f"n_antennas = {scenario.n_antennas}",
        f"sca_tol = {scenario.sca_tol!r}",
        f"s_vmax = {scenario.s_vmax!r}",
        f"j_vmax = {scenario.j_vmax!r}",
    ]
    return "\n".join(lines) + "\n"
