"""covert-uav command-line interface."""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from . import __version__
from .config import Settings, get_settings
from .detection import gamma_cap
from .errors import CovertUavError, IoError, VerificationError, exit_code_for
from .models.scenario import Scenario, Variant, default_scenario, dump_scenario
from .models.trajectory import Bench, Mode
from .optimizer import ScaOptions, sca_solve
from .oracle import run_battery
from .results import (
    SWEEP_FILE,
    VERIFICATION_FILE,
    ensure_dir,
    read_scenario_file,
    write_report,
    write_solve_outputs,
)
from .sweep import SweepSpec, run_sweep, write_sweep
from .utils import generate_run_id, get_current_timestamp, setup_logging

logger = logging.getLogger(__name__)

BENCH_CHOICES = [b.value for b in Bench]
MODE_CHOICES = [m.value for m in Mode]


def _log_banner(command: str, settings: Settings) -> None:
    logger.info("🚀 covert-uav %s: %s", __version__, command)
    logger.info("   Solver: %s (feas %.0e, gap %.0e)", settings.solver, settings.feas_tol, settings.gap_tol)
    logger.info("   Max SCA iterations: %d", settings.max_iter)
    logger.info("   Covertness samples: %d", settings.covert_samples)


def _scenario(args: argparse.Namespace) -> Scenario:
    if args.config is not None:
        return read_scenario_file(Path(args.config))
    return default_scenario(args.variant)


def cmd_solve(args: argparse.Namespace, settings: Settings) -> int:
    scn = _scenario(args)
    mode, bench = Mode(args.mode), Bench.parse(args.bench)
    out_dir = ensure_dir(Path(args.out))
    opts = ScaOptions.from_settings(
        settings,
        max_iter=args.max_iter,
        dump_dir=out_dir / "programs" if args.dump_programs else None,
    )
    res = sca_solve(scn, mode, bench, opts)

    manifest: Dict[str, Any] = {
        "run_id": generate_run_id(),
        "created_at": get_current_timestamp(),
        "version": __version__,
        "command": "solve",
        "mode": mode.value,
        "bench": bench.value,
        "status": res.status.value,
        "iterations": res.iterations,
        "min_avg_rate": res.min_avg_rate,
        "avg_power": res.avg_power,
        "gamma_max": gamma_cap(mode, scn.epsilon, scn.n_obs),
        "scenario_hash": scn.fingerprint(),
        "scenario": dump_scenario(scn).splitlines(),
        "seeds": {"seed": args.seed, "mc_seed": settings.mc_seed},
        "tolerances": {
            "sca_tol": scn.sca_tol,
            "feas_tol": opts.feas_tol,
            "gap_tol": opts.gap_tol,
            "chain_tol": opts.chain_tol,
            "max_iter": opts.max_iter,
        },
        "solver": opts.solver,
    }
    if res.covert_report is not None:
        manifest["covert_max_ratio"] = res.covert_report.max_ratio
        manifest["covert_min_dep"] = res.covert_report.min_dep
    write_solve_outputs(out_dir, res, manifest)
    logger.info("✅ %s/%s: min avg rate %.6f bits/s/Hz", mode.value, bench.value, res.min_avg_rate)
    return 0


def cmd_sweep(args: argparse.Namespace, settings: Settings) -> int:
    spec_path = Path(args.spec)
    try:
        document = spec_path.read_text(encoding="utf-8")
    except OSError as e:
        raise IoError(f"cannot read sweep spec {spec_path}: {e.strerror or e}", path=str(spec_path)) from e
    spec = SweepSpec.parse(document, base_dir=spec_path.parent)
    out_dir = ensure_dir(Path(args.out))
    parallelism = settings.parallelism if args.parallelism is None else args.parallelism
    rows = run_sweep(spec, ScaOptions.from_settings(settings, max_iter=args.max_iter), parallelism)
    write_sweep(out_dir / SWEEP_FILE, rows)
    failed = [r for r in rows if not r.ok]
    logger.info("✅ Sweep wrote %d rows (%d failed) to %s", len(rows), len(failed), out_dir / SWEEP_FILE)
    return 0


def cmd_verify(args: argparse.Namespace, settings: Settings) -> int:
    trials = settings.mc_trials if args.trials is None else args.trials
    seed = settings.mc_seed if args.seed is None else args.seed
    out_dir = ensure_dir(Path(args.out))
    report = run_battery(trials, seed=seed, z=args.z)
    write_report(out_dir / VERIFICATION_FILE, report, passed=report.passed, counts=report.counts())
    if not report.passed:
        raise VerificationError(
            f"{len(report.failures)} verification case(s) failed",
            failures=[c.name for c in report.failures],
            report=str(out_dir / VERIFICATION_FILE),
        )
    logger.info("✅ All %d verification cases passed or were informational", len(report.cases))
    return 0


def cmd_defaults(args: argparse.Namespace, settings: Settings) -> int:
    sys.stdout.write(f"scenario = {Variant(args.variant).value}\n")
    sys.stdout.write(dump_scenario(default_scenario(args.variant)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="covert-uav",
        description="Joint transmitter and jammer trajectory design for covert UAV downlinks.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default=None, help="override COVERT_UAV_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="optimize one scenario")
    solve.add_argument("--config", help="scenario document (default: the built-in scenario)")
    solve.add_argument("--variant", choices=[v.value for v in Variant], default=Variant.SCENARIO1.value)
    solve.add_argument("--mode", choices=MODE_CHOICES, default=Mode.SINGLE.value)
    solve.add_argument("--bench", choices=BENCH_CHOICES, default=Bench.PROPOSED.value)
    solve.add_argument("--out", default="out", help="output directory")
    solve.add_argument("--seed", type=int, default=0, help="recorded in the manifest")
    solve.add_argument("--max-iter", type=int, default=None)
    solve.add_argument("--dump-programs", action="store_true", help="write every subproblem listing")
    solve.set_defaults(handler=cmd_solve)

    sweep = sub.add_parser("sweep", help="run a parameter sweep")
    sweep.add_argument("spec", help="sweep specification (JSON)")
    sweep.add_argument("--out", default="out", help="output directory")
    sweep.add_argument("--parallelism", type=int, default=None, help="worker processes (0 = auto)")
    sweep.add_argument("--max-iter", type=int, default=None)
    sweep.set_defaults(handler=cmd_sweep)

    verify = sub.add_parser("verify", help="check the detection formulas against Monte-Carlo oracles")
    verify.add_argument("--out", default="out", help="output directory")
    verify.add_argument("--trials", type=int, default=None)
    verify.add_argument("--seed", type=int, default=None)
    verify.add_argument("--z", type=float, default=3.0, help="acceptance band in binomial sigmas")
    verify.set_defaults(handler=cmd_verify)

    defaults = sub.add_parser("defaults", help="print the built-in scenario document")
    defaults.add_argument("--variant", choices=[v.value for v in Variant], default=Variant.SCENARIO1.value)
    defaults.set_defaults(handler=cmd_defaults)
    return parser


def _report_error(error: BaseException) -> int:
    code = exit_code_for(error)
    if isinstance(error, CovertUavError):
        payload = error.to_dict()
    else:
        payload = {"error": str(error), "type": type(error).__name__, "exit_code": code, "details": {}}
    sys.stderr.write(json.dumps(payload, sort_keys=True) + "\n")
    return code


def main(argv: Optional[List[str]] = None) -> int:
    """Entry point of the ``covert-uav`` console script."""
    parser = build_parser()
    args = parser.parse_args(argv)
    settings = get_settings()
    setup_logging(args.log_level or settings.log_level)
    if args.command != "defaults":
        _log_banner(args.command, settings)
    try:
        return args.handler(args, settings)
    except (CovertUavError, OSError) as e:
        logger.error("%s failed: %s", args.command, e)
        return _report_error(e)


if __name__ == "__main__":
    sys.exit(main())
