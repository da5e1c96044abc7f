"""
Integration tests for the covert-uav command line with real solves.
"""

import json
import os
from unittest.mock import patch

import pytest

from src.covert_uav.main import main
from src.covert_uav.results import read_covert, read_trace, read_trajectory
from src.covert_uav.sweep import read_sweep

SMALL_CONFIG = "scenario = scenario1\nn_slots = 20\nslot_seconds = 5.0\n"

# Fields that legitimately differ between identical runs
VOLATILE = {"run_id", "created_at"}


def stable_trace(path):
    trace = read_trace(path)
    for record in trace["records"]:
        record.pop("wall_seconds")
    return trace


def stable_manifest(path):
    manifest = json.loads(path.read_text())
    return {k: v for k, v in manifest.items() if k not in VOLATILE}


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "small.txt"
    path.write_text(SMALL_CONFIG)
    return path


@pytest.mark.integration
class TestSolveCli:
    """End-to-end solve runs."""

    def test_outputs(self, tmp_path, small_config):
        out = tmp_path / "run"
        with patch.dict(os.environ, {"COVERT_UAV_COVERT_SAMPLES": "36"}):
            assert main(["solve", "--config", str(small_config), "--out", str(out)]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["status"] == "converged"
        assert manifest["covert_max_ratio"] <= 1.0 + 1e-6
        assert read_trajectory(out / "trajectory.csv").n_slots == 20
        assert len(read_covert(out / "covert.csv")) == 20 * 3
        trace = read_trace(out / "trace.json")
        assert trace["iterations"] == manifest["iterations"]
        assert trace["trace"][-1] <= manifest["min_avg_rate"] + 1e-6

    def test_repeatable(self, tmp_path, small_config):
        """Identical invocations write identical files apart from timings and run ids."""
        runs = [tmp_path / "a", tmp_path / "b"]
        with patch.dict(os.environ, {"COVERT_UAV_COVERT_SAMPLES": "36"}):
            for out in runs:
                assert main(["solve", "--config", str(small_config), "--out", str(out), "--seed", "3"]) == 0
        a, b = runs
        for name in ("trajectory.csv", "rates.csv", "covert.csv"):
            assert (a / name).read_bytes() == (b / name).read_bytes(), name
        assert stable_trace(a / "trace.json") == stable_trace(b / "trace.json")
        assert stable_manifest(a / "manifest.json") == stable_manifest(b / "manifest.json")

    def test_dump_programs(self, tmp_path, small_config):
        out = tmp_path / "run"
        with patch.dict(os.environ, {"COVERT_UAV_COVERT_SAMPLES": "8"}):
            assert main(["solve", "--config", str(small_config), "--out", str(out), "--max-iter", "2",
                         "--dump-programs"]) == 0
        dumped = sorted(p.name for p in (out / "programs").iterdir())
        assert dumped[0] == "program_001.txt"
        assert len(dumped) <= 2


@pytest.mark.integration
class TestSweepCli:
    def test_sweep(self, tmp_path):
        spec = tmp_path / "sweep.json"
        spec.write_text(json.dumps({"axis": "epsilon", "values": [0.05, 0.1], "n_slots": 20,
                                    "benches": ["proposed", "b3"]}))
        assert main(["sweep", str(spec), "--out", str(tmp_path / "out"), "--parallelism", "1"]) == 0
        rows = read_sweep(tmp_path / "out" / "sweep.csv")
        assert [(r.axis_value, r.bench.value) for r in rows] == [
            (0.05, "proposed"), (0.05, "b3"), (0.1, "proposed"), (0.1, "b3"),
        ]
        assert all(r.ok for r in rows)
