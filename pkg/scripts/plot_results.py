#!/usr/bin/env python3
"""Plot the files written by ``covert-uav solve`` or ``covert-uav sweep``.

Needs the ``plot`` extra (matplotlib).
"""

import argparse
import json
import logging
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from src.covert_uav.models.scenario import load_scenario  # noqa: E402
from src.covert_uav.results import (  # noqa: E402
    MANIFEST_FILE,
    SWEEP_FILE,
    TRACE_FILE,
    TRAJECTORY_FILE,
    read_trace,
    read_trajectory,
)
from src.covert_uav.sweep import read_sweep  # noqa: E402
from src.covert_uav.utils import setup_logging  # noqa: E402

logger = logging.getLogger(__name__)


def plot_solve(run_dir: Path) -> Path:
    """Trajectories over the scenario map, power per slot and the SCA trace."""
    traj = read_trajectory(run_dir / TRAJECTORY_FILE)
    trace = read_trace(run_dir / TRACE_FILE)
    manifest = json.loads((run_dir / MANIFEST_FILE).read_text())
    scn = load_scenario("\n".join(manifest["scenario"]))

    fig, (ax_map, ax_power, ax_trace) = plt.subplots(1, 3, figsize=(16, 5))

    ax_map.plot(traj.q_s[:, 0], traj.q_s[:, 1], "o-", markersize=3, label="S")
    ax_map.plot(traj.q_j[:, 0], traj.q_j[:, 1], "s-", markersize=3, label="J")
    users = np.array(scn.users)
    ax_map.scatter(users[:, 0], users[:, 1], marker="^", color="green", label="users")
    for i, warden in enumerate(scn.wardens):
        ax_map.add_patch(plt.Circle(warden.est_pos, warden.radius, color="red", alpha=0.2))
        ax_map.scatter(*warden.est_pos, marker="x", color="red", label="wardens" if i == 0 else None)
    ax_map.set_aspect("equal")
    ax_map.set_xlabel("x (m)")
    ax_map.set_ylabel("y (m)")
    ax_map.set_title(f"{manifest['mode']}/{manifest['bench']}")
    ax_map.grid()
    ax_map.legend()

    ax_power.step(np.arange(1, traj.n_slots + 1), traj.p_s, where="mid")
    ax_power.set_xlabel("slot")
    ax_power.set_ylabel("S power (W)")
    ax_power.grid()

    ax_trace.plot(trace["trace"], "o-")
    ax_trace.set_xlabel("iteration")
    ax_trace.set_ylabel("min average rate bound (bits/s/Hz)")
    ax_trace.grid()

    out = run_dir / "solve.png"
    fig.savefig(out, bbox_inches="tight")
    plt.close(fig)
    return out


def plot_sweep(run_dir: Path) -> Path:
    """Minimum average rate against the sweep axis, one line per scheme."""
    rows = [r for r in read_sweep(run_dir / SWEEP_FILE) if r.ok]
    if not rows:
        raise ValueError(f"no successful rows in {run_dir / SWEEP_FILE}")

    fig, ax = plt.subplots(figsize=(7, 5))
    for bench in dict.fromkeys(r.bench for r in rows):
        points = [(r.axis_value, r.min_avg_rate) for r in rows if r.bench is bench]
        ax.plot(*zip(*points), "o-", label=bench.value)
    ax.set_xlabel(rows[0].axis)
    ax.set_ylabel("min average rate (bits/s/Hz)")
    ax.grid()
    ax.legend()

    out = run_dir / "sweep.png"
    fig.savefig(out, bbox_inches="tight")
    plt.close(fig)
    return out


def main() -> int:
    parser = argparse.ArgumentParser(description="Plot covert-uav results")
    parser.add_argument("run_dir", help="output directory of a solve or sweep run")
    parser.add_argument("--sweep", action="store_true", help="plot sweep.csv instead of a solve run")
    args = parser.parse_args()
    setup_logging("INFO")

    run_dir = Path(args.run_dir)
    out = plot_sweep(run_dir) if args.sweep else plot_solve(run_dir)
    logger.info("📈 Wrote %s", out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
