"""
Unit tests for the covert-uav command line.
Solver-heavy commands are mocked; the integration suite runs them for real.
"""

import importlib
import json
from unittest.mock import patch

import pytest

from src.covert_uav import __version__
from src.covert_uav.channel import slot_rates
from src.covert_uav.main import build_parser, main
from src.covert_uav.models.scenario import default_scenario, load_scenario
from src.covert_uav.models.trajectory import Bench, Mode, SolveResult, Status
from src.covert_uav.optimizer import initialize, verify_covertness
from src.covert_uav.oracle import VerificationCase, VerificationReport

# src.covert_uav.main also names the re-exported function.
cli = importlib.import_module("src.covert_uav.main")


def error_payload(capsys):
    """Last stderr line as JSON."""
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def initial_result(scn):
    it = initialize(scn)
    res = SolveResult(
        final=it,
        trace=[it.objective],
        status=Status.CONVERGED,
        mode=Mode.SINGLE,
        bench=Bench.PROPOSED,
        rates=slot_rates(it.traj, scn),
    )
    res.covert_report = verify_covertness(res, scn, samples=8)
    return res


class TestParser:
    """Argument parsing."""

    def test_solve_defaults(self):
        args = build_parser().parse_args(["solve"])
        assert (args.variant, args.mode, args.bench, args.out) == ("scenario1", "single", "proposed", "out")
        assert args.max_iter is None
        assert args.dump_programs is False

    def test_unknown_bench(self):
        with pytest.raises(SystemExit) as exc:
            build_parser().parse_args(["solve", "--bench", "b9"])
        assert exc.value.code == 2

    def test_version(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
        assert __version__ in capsys.readouterr().out

    def test_command_required(self):
        with pytest.raises(SystemExit):
            main([])


class TestDefaults:
    """The defaults command prints a loadable document."""

    @pytest.mark.parametrize("variant", ["scenario1", "scenario2"])
    def test_reloads(self, capsys, variant):
        assert main(["defaults", "--variant", variant]) == 0
        out = capsys.readouterr().out
        assert out.startswith(f"scenario = {variant}\n")
        assert load_scenario(out) == default_scenario(variant)


class TestErrors:
    """Errors become a JSON line on stderr and an exit code."""

    def test_missing_config(self, capsys, tmp_path):
        code = main(["solve", "--config", str(tmp_path / "absent.txt"), "--out", str(tmp_path / "out")])
        assert code == 5
        payload = error_payload(capsys)
        assert payload["type"] == "IoError"
        assert payload["exit_code"] == 5

    def test_invalid_config(self, capsys, tmp_path):
        config = tmp_path / "bad.txt"
        config.write_text("epsilon = 1.5\n")
        assert main(["solve", "--config", str(config), "--out", str(tmp_path / "out")]) == 2
        payload = error_payload(capsys)
        assert payload["type"] == "ValidationError"
        assert payload["details"]["field"] == "epsilon"

    def test_invalid_max_iter(self, capsys, tmp_path):
        """A non-positive iteration limit is rejected before any solve."""
        with patch.object(cli, "sca_solve") as solve:
            assert main(["solve", "--max-iter", "0", "--out", str(tmp_path)]) == 2
        solve.assert_not_called()
        payload = error_payload(capsys)
        assert payload["type"] == "ValidationError"
        assert payload["details"]["field"] == "max_iter"

    def test_unreachable_config(self, capsys, tmp_path):
        config = tmp_path / "short.txt"
        config.write_text("n_slots = 10\n")
        assert main(["solve", "--config", str(config), "--out", str(tmp_path / "out")]) == 2
        assert error_payload(capsys)["type"] == "ReachabilityError"

    def test_missing_sweep_spec(self, capsys, tmp_path):
        assert main(["sweep", str(tmp_path / "absent.json"), "--out", str(tmp_path)]) == 5

    def test_invalid_sweep_spec(self, capsys, tmp_path):
        spec = tmp_path / "sweep.json"
        spec.write_text(json.dumps({"axis": "altitude", "values": [1, 2]}))
        assert main(["sweep", str(spec), "--out", str(tmp_path)]) == 2
        assert error_payload(capsys)["details"]["field"] == "axis"


class TestSolveCommand:
    """solve with a mocked optimizer."""

    def test_outputs(self, tmp_path):
        out = tmp_path / "run"
        res = initial_result(default_scenario())
        with patch.object(cli, "sca_solve", return_value=res):
            assert main(["solve", "--out", str(out), "--seed", "7", "--max-iter", "3"]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "solve"
        assert manifest["status"] == "converged"
        assert manifest["iterations"] == 0
        assert manifest["seeds"]["seed"] == 7
        assert manifest["tolerances"]["max_iter"] == 3
        assert manifest["scenario_hash"] == default_scenario().fingerprint()
        assert manifest["covert_max_ratio"] <= 1.0
        for name in ("trajectory.csv", "rates.csv", "covert.csv", "trace.json"):
            assert (out / name).exists()

    def test_options_forwarded(self, tmp_path):
        """--max-iter and --dump-programs reach the optimizer."""
        res = initial_result(default_scenario())
        with patch.object(cli, "sca_solve", return_value=res) as solve:
            main(["solve", "--out", str(tmp_path), "--max-iter", "2", "--dump-programs", "--bench", "b2"])
        scn, mode, bench, opts = solve.call_args[0]
        assert bench is Bench.B2_FIXED_J
        assert opts.max_iter == 2
        assert opts.dump_dir == tmp_path / "programs"


class TestVerifyCommand:
    """verify with a mocked battery."""

    @staticmethod
    def report(verdict):
        report = VerificationReport(seed=1, trials=100, z=3.0)
        report.cases.append(
            VerificationCase(name="single[0].fa", kind="montecarlo", closed_form=0.1, estimate=0.5,
                             tolerance=0.01, verdict=verdict)
        )
        return report

    def test_pass(self, tmp_path):
        with patch.object(cli, "run_battery", return_value=self.report("pass")) as battery:
            assert main(["verify", "--out", str(tmp_path), "--trials", "100", "--seed", "1"]) == 0
        battery.assert_called_once_with(100, seed=1, z=3.0)
        payload = json.loads((tmp_path / "verification.json").read_text())
        assert payload["passed"] is True
        assert payload["counts"] == {"pass": 1}

    def test_failure_exit_code(self, capsys, tmp_path):
        """A failed case gives exit code 4 and still writes the report."""
        with patch.object(cli, "run_battery", return_value=self.report("fail")):
            assert main(["verify", "--out", str(tmp_path)]) == 4
        payload = error_payload(capsys)
        assert payload["type"] == "VerificationError"
        assert payload["details"]["failures"] == ["single[0].fa"]
        assert json.loads((tmp_path / "verification.json").read_text())["passed"] is False
