"""Parameter sweeps: one SCA run per (axis value, scheme) cell."""

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from pydantic import ValidationError as PydanticValidationError

from .errors import CovertUavError, ParseError, ValidationError
from .models.scenario import Scenario, default_scenario
from .models.trajectory import Bench, Mode
from .optimizer import ScaOptions, sca_solve
from .results import SWEEP_COLUMNS, read_csv, read_scenario_file, write_csv
from .utils import resolve_parallelism

logger = logging.getLogger(__name__)

AXES = ("n_obs", "epsilon", "p_jam", "radius_scale", "n_antennas")
_INTEGER_AXES = ("n_obs", "n_antennas")
_BENCH_ORDER = {b: i for i, b in enumerate(Bench)}


class SweepSpec(BaseModel):
    """One sweep: a scenario axis, its values and the schemes to run at each value."""

    model_config = ConfigDict(extra="forbid")

    axis: str
    values: List[float] = Field(min_length=1)
    benches: List[Bench] = Field(default_factory=lambda: [Bench.PROPOSED])
    mode: Mode = Mode.SINGLE
    config: Optional[Path] = None
    overrides: Dict[str, Any] = Field(default_factory=dict)
    n_slots: Optional[int] = Field(default=None, ge=2)

    @field_validator("axis")
    @classmethod
    def _known_axis(cls, value: str) -> str:
        if value not in AXES:
            raise ValueError(f"axis must be one of {', '.join(AXES)}")
        return value

    @field_validator("benches", mode="before")
    @classmethod
    def _parse_benches(cls, value: Any) -> Any:
        if isinstance(value, (list, tuple)):
            return [Bench.parse(v) if isinstance(v, str) else v for v in value]
        return value

    @model_validator(mode="after")
    def _check_values(self) -> "SweepSpec":
        if not self.benches:
            raise ValueError("benches must not be empty")
        if any(later <= earlier for earlier, later in zip(self.values, self.values[1:])):
            raise ValueError("values must be strictly increasing")
        if self.axis in _INTEGER_AXES and any(v != int(v) for v in self.values):
            raise ValueError(f"{self.axis} values must be integers")
        return self

    @classmethod
    def parse(cls, document: str, base_dir: Optional[Path] = None) -> "SweepSpec":
        """Validate a JSON sweep document; relative config paths resolve against ``base_dir``."""
        try:
            spec = cls.model_validate_json(document)
        except PydanticValidationError as e:
            first = e.errors()[0]
            if first["type"] == "json_invalid":
                raise ParseError(f"sweep document is not valid JSON: {first['msg']}") from e
            field = ".".join(str(part) for part in first["loc"]) or None
            raise ValidationError(f"invalid sweep field {field}: {first['msg']}", field=field) from e
        if spec.config is not None and base_dir is not None and not spec.config.is_absolute():
            spec.config = base_dir / spec.config
        return spec

    def base_scenario(self) -> Scenario:
        base = read_scenario_file(self.config) if self.config is not None else default_scenario()
        changes = dict(self.overrides)
        if self.n_slots is not None:
            # same flight duration, coarser slots
            changes["n_slots"] = self.n_slots
            changes["slot_seconds"] = base.flight_seconds / self.n_slots
        return base.with_updates(**changes) if changes else base

    def scenario_at(self, base: Scenario, value: float) -> Scenario:
        if self.axis == "radius_scale":
            return base.scale_radii(value)
        if self.axis in _INTEGER_AXES:
            return base.with_updates(**{self.axis: int(value)})
        return base.with_updates(**{self.axis: value})

    def cells(self) -> List[Tuple[float, Bench]]:
        return [(v, b) for v in self.values for b in self.benches]


class SweepRow(BaseModel):
    """Aggregated outcome of one sweep cell."""

    axis: str
    axis_value: float
    bench: Bench
    status: str
    min_avg_rate: Optional[float] = None
    avg_power: Optional[float] = None
    iterations: Optional[int] = None
    wall_seconds: float = 0.0
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


def _run_cell(axis: str, value: float, bench: Bench, mode: Mode, scn: Scenario, opts: ScaOptions) -> SweepRow:
    start = time.perf_counter()
    try:
        res = sca_solve(scn, mode, bench, opts)
    except CovertUavError as e:
        logger.warning("Sweep cell %s=%g/%s failed: %s", axis, value, bench.value, e.message)
        return SweepRow(
            axis=axis,
            axis_value=value,
            bench=bench,
            status="failed",
            wall_seconds=time.perf_counter() - start,
            error=f"{type(e).__name__}: {e.message}",
        )
    return SweepRow(
        axis=axis,
        axis_value=value,
        bench=bench,
        status=res.status.value,
        min_avg_rate=res.min_avg_rate,
        avg_power=res.avg_power,
        iterations=res.iterations,
        wall_seconds=res.wall_seconds,
    )


def run_sweep(spec: SweepSpec, opts: Optional[ScaOptions] = None, parallelism: int = 0) -> List[SweepRow]:
    """Run every cell of the sweep; failed cells are kept as rows with an error.

    Rows come back ordered by axis value and scheme regardless of the order
    in which cells finish.
    """
    opts = (opts or ScaOptions.from_settings()).model_copy(update={"strict": False, "dump_dir": None})
    base = spec.base_scenario()
    # invalid axis values surface here, before any worker starts
    jobs = [(value, bench, spec.scenario_at(base, value)) for value, bench in spec.cells()]
    workers = resolve_parallelism(parallelism, len(jobs))
    logger.info(
        "Sweep over %s: %d values x %d schemes = %d cells on %d worker(s)",
        spec.axis,
        len(spec.values),
        len(spec.benches),
        len(jobs),
        workers,
    )

    if workers == 1:
        rows = [_run_cell(spec.axis, v, b, spec.mode, scn, opts) for v, b, scn in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_cell, spec.axis, v, b, spec.mode, scn, opts) for v, b, scn in jobs]
            rows = [f.result() for f in futures]

    rows.sort(key=lambda r: (r.axis_value, _BENCH_ORDER[r.bench]))
    failed = sum(1 for r in rows if not r.ok)
    if failed:
        logger.warning("Sweep finished with %d failed cell(s)", failed)
    return rows


def write_sweep(path: Path, rows: List[SweepRow]) -> Path:
    return write_csv(path, SWEEP_COLUMNS, (r.model_dump() for r in rows))


def read_sweep(path: Path) -> List[SweepRow]:
    rows = read_csv(path, SWEEP_COLUMNS)
    return [SweepRow(**{k: (v if v != "" else None) for k, v in r.items()}) for r in rows]
