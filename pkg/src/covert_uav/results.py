"""Result files: CSV tables, JSON traces, run manifests and their readers.

Every CSV has a fixed header. Floats are written with ``repr`` so repeated
runs produce identical bytes and reading a file back returns the exact
values.
"""

import csv
import json
import logging
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional

import numpy as np
from pydantic import BaseModel

from .errors import IoError, ParseError
from .models.scenario import Scenario, load_scenario
from .models.trajectory import CovertEntry, SolveResult, Trajectory

logger = logging.getLogger(__name__)

TRAJECTORY_FILE = "trajectory.csv"
RATES_FILE = "rates.csv"
COVERT_FILE = "covert.csv"
TRACE_FILE = "trace.json"
MANIFEST_FILE = "manifest.json"
VERIFICATION_FILE = "verification.json"
SWEEP_FILE = "sweep.csv"

TRAJECTORY_COLUMNS = ["slot", "x_s", "y_s", "x_j", "y_j", "p_s_watts"]
COVERT_COLUMNS = ["slot", "warden", "max_ratio", "min_dep", "worst_x", "worst_y", "pinsker"]
SWEEP_COLUMNS = [
    "axis",
    "axis_value",
    "bench",
    "status",
    "min_avg_rate",
    "avg_power",
    "iterations",
    "wall_seconds",
    "error",
]


def rates_columns(n_users: int) -> List[str]:
    return ["slot"] + [f"rate_user_{k + 1}" for k in range(n_users)]


def _fmt(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def ensure_dir(path: Path) -> Path:
    """Create an output directory, mapping OS failures to IoError."""
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise IoError(f"cannot create output directory {path}: {e.strerror or e}", path=str(path)) from e
    return path


def write_csv(path: Path, fieldnames: List[str], rows: Iterable[Dict[str, Any]]) -> Path:
    try:
        with path.open("w", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(f, fieldnames=fieldnames, extrasaction="ignore", lineterminator="\n")
            writer.writeheader()
            for row in rows:
                writer.writerow({k: _fmt(v) for k, v in row.items()})
    except OSError as e:
        raise IoError(f"cannot write {path}: {e.strerror or e}", path=str(path)) from e
    logger.debug("Wrote %s", path)
    return path


def read_csv(path: Path, fieldnames: Optional[List[str]] = None) -> List[Dict[str, str]]:
    """Rows of a CSV file; checks the header when ``fieldnames`` is given."""
    try:
        with path.open("r", newline="", encoding="utf-8") as f:
            reader = csv.DictReader(f)
            rows = list(reader)
            header = list(reader.fieldnames or [])
    except OSError as e:
        raise IoError(f"cannot read {path}: {e.strerror or e}", path=str(path)) from e
    if fieldnames is not None and header != fieldnames:
        raise ParseError(f"{path.name}: expected columns {fieldnames}, found {header}", path=str(path))
    return rows


def write_json(path: Path, payload: Any) -> Path:
    try:
        path.write_text(json.dumps(payload, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
    except OSError as e:
        raise IoError(f"cannot write {path}: {e.strerror or e}", path=str(path)) from e
    logger.debug("Wrote %s", path)
    return path


def read_json(path: Path) -> Any:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise IoError(f"cannot read {path}: {e.strerror or e}", path=str(path)) from e
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path.name} is not valid JSON: {e.msg}", path=str(path), line=e.lineno) from e


def read_scenario_file(path: Path) -> Scenario:
    """Load a scenario document from disk."""
    try:
        document = path.read_text(encoding="utf-8")
    except OSError as e:
        raise IoError(f"cannot read scenario {path}: {e.strerror or e}", path=str(path)) from e
    return load_scenario(document)


# Trajectories and per-slot tables


def write_trajectory(path: Path, traj: Trajectory) -> Path:
    rows = (
        {
            "slot": n,
            "x_s": traj.q_s[n, 0],
            "y_s": traj.q_s[n, 1],
            "x_j": traj.q_j[n, 0],
            "y_j": traj.q_j[n, 1],
            "p_s_watts": traj.p_s[n],
        }
        for n in range(traj.n_slots)
    )
    return write_csv(path, TRAJECTORY_COLUMNS, rows)


def read_trajectory(path: Path) -> Trajectory:
    rows = read_csv(path, TRAJECTORY_COLUMNS)
    try:
        values = np.array([[float(r[c]) for c in TRAJECTORY_COLUMNS[1:]] for r in rows], dtype=float)
    except ValueError as e:
        raise ParseError(f"{path.name}: {e}", path=str(path)) from e
    if values.shape[0] == 0:
        raise ParseError(f"{path.name} has no slots", path=str(path))
    return Trajectory(q_s=values[:, 0:2], q_j=values[:, 2:4], p_s=values[:, 4])


def write_rates(path: Path, rates: np.ndarray) -> Path:
    columns = rates_columns(rates.shape[1])
    rows = ({"slot": n, **dict(zip(columns[1:], rates[n]))} for n in range(rates.shape[0]))
    return write_csv(path, columns, rows)


def read_rates(path: Path) -> np.ndarray:
    rows = read_csv(path)
    if not rows:
        raise ParseError(f"{path.name} has no slots", path=str(path))
    users = [c for c in rows[0] if c.startswith("rate_user_")]
    return np.array([[float(r[c]) for c in users] for r in rows], dtype=float)


def write_covert(path: Path, entries: Iterable[CovertEntry]) -> Path:
    return write_csv(path, COVERT_COLUMNS, (e.model_dump() for e in entries))


def read_covert(path: Path) -> List[CovertEntry]:
    rows = read_csv(path, COVERT_COLUMNS)
    return [CovertEntry(**{k: (v if v != "" else None) for k, v in r.items()}) for r in rows]


# Traces, manifests and reports


def trace_payload(res: SolveResult) -> Dict[str, Any]:
    return {
        "mode": res.mode.value,
        "bench": res.bench.value,
        "status": res.status.value,
        "iterations": res.iterations,
        "trace": [float(v) for v in res.trace],
        "records": [r.model_dump() for r in res.records],
    }


def write_trace(path: Path, res: SolveResult) -> Path:
    return write_json(path, trace_payload(res))


def read_trace(path: Path) -> Dict[str, Any]:
    payload = read_json(path)
    if not isinstance(payload, dict) or "trace" not in payload:
        raise ParseError(f"{path.name} is not an SCA trace", path=str(path))
    return payload


def write_report(path: Path, report: BaseModel, **extra: Any) -> Path:
    """Dump a pydantic report as JSON; ``extra`` adds top-level keys."""
    return write_json(path, {**report.model_dump(mode="json"), **extra})


def write_solve_outputs(out_dir: Path, res: SolveResult, manifest: Dict[str, Any]) -> Dict[str, Path]:
    """Write every file of a solve run into ``out_dir``."""
    ensure_dir(out_dir)
    files = {
        "trajectory": write_trajectory(out_dir / TRAJECTORY_FILE, res.trajectory),
        "trace": write_trace(out_dir / TRACE_FILE, res),
    }
    if res.rates is not None:
        files["rates"] = write_rates(out_dir / RATES_FILE, res.rates)
    if res.covert_report is not None:
        files["covert"] = write_covert(out_dir / COVERT_FILE, res.covert_report.entries)
    manifest = dict(manifest, files=sorted(p.name for p in files.values()) + [MANIFEST_FILE])
    files["manifest"] = write_json(out_dir / MANIFEST_FILE, manifest)
    logger.info("Wrote %d files to %s", len(files), out_dir)
    return files
