"""
Unit tests for SCA initialization, options and the covertness check.
Subproblem solves are mocked; real solves live in the integration suite.
"""

import os
from unittest.mock import patch

import numpy as np
import pytest

from src.covert_uav.channel import gain_sq, min_avg_rate, slot_rates
from src.covert_uav.config import get_settings
from src.covert_uav.conic import ConvexProgram, ProgramStatus, SolveOutcome
from src.covert_uav.detection import SlotDetectionInput, dep_multi, gamma_cap
from src.covert_uav.errors import LinearizationError, SubproblemFailure, ValidationError
from src.covert_uav.models.trajectory import Bench, Iterate, Mode, SolveResult, Status, Trajectory
from src.covert_uav.optimizer import (
    INIT_POWER_FACTOR,
    ScaOptions,
    _candidates,
    hover_start,
    initialize,
    sca_solve,
    verify_covertness,
)
from src.covert_uav.sca import Subproblem, assemble_subproblem, covert_power_limit, power_floor


def initial_result(scn, mode=Mode.SINGLE, bench=Bench.PROPOSED):
    it = initialize(scn, bench, mode)
    return SolveResult(
        final=it,
        trace=[it.objective],
        status=Status.CONVERGED,
        mode=mode,
        bench=bench,
        rates=slot_rates(it.traj, scn),
    )


class TestInitialize:
    """Straight-line initial trajectories."""

    def test_straight_lines(self, scenario1):
        """Both UAVs fly at constant speed between their endpoints."""
        it = initialize(scenario1)
        steps_s = np.linalg.norm(np.diff(it.traj.q_s, axis=0), axis=1)
        steps_j = np.linalg.norm(np.diff(it.traj.q_j, axis=0), axis=1)
        np.testing.assert_allclose(steps_s, 800.0 / 49, rtol=1e-12)
        np.testing.assert_allclose(steps_j, 800.0 / 49, rtol=1e-12)
        assert tuple(it.traj.q_s[0]) == scenario1.s_start
        assert tuple(it.traj.q_j[-1]) == scenario1.j_end

    def test_power_below_covert_limit(self, scenario1):
        """Power is 0.9 of the covert limit, capped at P_max and lifted to the floor."""
        it = initialize(scenario1)
        g = gamma_cap(Mode.SINGLE, scenario1.epsilon, scenario1.n_obs)
        limit = covert_power_limit(scenario1, it.traj.q_s, it.traj.q_j, g)
        expected = np.maximum(np.minimum(scenario1.p_max, INIT_POWER_FACTOR * limit), power_floor(scenario1, g))
        np.testing.assert_allclose(it.traj.p_s, expected, rtol=1e-12)
        assert np.all(it.traj.p_s <= scenario1.p_max)
        assert np.all(it.traj.p_s > 0.0)

    def test_objective_is_min_avg_rate(self, scenario1):
        it = initialize(scenario1)
        assert it.objective == pytest.approx(min_avg_rate(it.traj, scenario1), rel=1e-12)

    def test_hovering_jammer(self, scenario1):
        """The hovering benchmark parks J midway between its endpoints."""
        it = initialize(scenario1, Bench.B3_HOVER_J)
        np.testing.assert_allclose(it.traj.q_j, np.tile([300.0, 0.0], (50, 1)))

    def test_tiny_epsilon(self, scenario1):
        """Near-perfect covertness leaves almost no power."""
        strict = scenario1.with_updates(epsilon=1e-6)
        it = initialize(strict)
        assert it.traj.p_s.max() < 1e-3 * initialize(scenario1).traj.p_s.max()

    def test_multi_mode_uses_antennas(self, scenario1):
        """More warden antennas lower the initial power."""
        one = initialize(scenario1, mode=Mode.MULTI)
        four = initialize(scenario1.with_updates(n_antennas=4), mode=Mode.MULTI)
        assert np.all(four.traj.p_s <= one.traj.p_s)

    def test_string_arguments(self, scenario1):
        it = initialize(scenario1, "b2", "multi")
        assert it.traj.q_j.shape == (50, 2)


class TestScaOptions:
    """Outer-loop options resolved from settings."""

    def test_from_settings(self):
        """COVERT_UAV_* variables feed the defaults."""
        with patch.dict(os.environ, {"COVERT_UAV_MAX_ITER": "7", "COVERT_UAV_COVERT_SAMPLES": "33"}):
            opts = ScaOptions.from_settings()
            assert opts.max_iter == 7
            assert opts.covert_samples == 33
            assert opts.solver == get_settings().solver

    def test_overrides(self):
        """Explicit overrides win; None leaves the setting."""
        opts = ScaOptions.from_settings(max_iter=3, tol=None, verify=False)
        assert opts.max_iter == 3
        assert opts.tol is None
        assert opts.verify is False

    def test_invalid_override(self):
        """Out-of-range overrides become a validation error naming the field."""
        with pytest.raises(ValidationError) as exc:
            ScaOptions.from_settings(max_iter=0)
        assert exc.value.field == "max_iter"
        assert exc.value.exit_code == 2

    def test_solve_options(self):
        opts = ScaOptions(solver="SCS", feas_tol=1e-6, gap_tol=1e-5)
        solve = opts.solve_options()
        assert (solve.solver, solve.feas_tol, solve.gap_tol) == ("SCS", 1e-6, 1e-5)

    def test_invalid(self):
        with pytest.raises(Exception):
            ScaOptions(max_iter=0)


class TestFailedSubproblem:
    """Outer loop when the conic solver does not return a usable point."""

    FAILED = SolveOutcome(status=ProgramStatus.NUMERICAL_LIMIT, backend_status="user_limit")

    def test_strict_raises(self, small_scenario):
        with patch.object(ConvexProgram, "solve", return_value=self.FAILED):
            with pytest.raises(SubproblemFailure) as exc:
                sca_solve(small_scenario, opts=ScaOptions(verify=False))
        assert exc.value.details["iteration"] == 1
        assert exc.value.details["status"] == "user_limit"

    def test_lenient_keeps_incumbent(self, small_scenario):
        """Without strict mode the initial point is returned with its status."""
        with patch.object(ConvexProgram, "solve", return_value=self.FAILED):
            res = sca_solve(small_scenario, opts=ScaOptions(verify=False, strict=False))
        assert res.status is Status.SUBPROBLEM_FAILURE
        assert res.iterations == 0
        assert res.trace == [pytest.approx(min_avg_rate(res.trajectory, small_scenario))]
        assert res.records[0].solver_status == "init"

    def test_dump_programs(self, small_scenario, tmp_path):
        """Programs are written before each solve."""
        with patch.object(ConvexProgram, "solve", return_value=self.FAILED):
            sca_solve(small_scenario, opts=ScaOptions(verify=False, strict=False, dump_dir=tmp_path))
        dumped = tmp_path / "program_001.txt"
        assert dumped.exists()
        assert dumped.read_text().startswith("program sca-single-proposed")


class TestChainViolation:
    """An incumbent that breaks its own subproblem after the first iteration."""

    OPTIMAL = SolveOutcome(status=ProgramStatus.OPTIMAL, backend_status="optimal")

    def run(self, scn, strict):
        it = initialize(scn)
        better = Iterate(traj=it.traj, d_prev=it.d_prev, c_prev=it.c_prev, objective=it.objective + 1.0)
        opts = ScaOptions(verify=False, strict=strict, hover_start=False, max_iter=2, tol=1e-9)
        with patch.object(Subproblem, "check_iterate", side_effect=[("rate.log", 0.0), ("cap", 1.0)]), \
                patch.object(ConvexProgram, "solve", return_value=self.OPTIMAL), \
                patch.object(Subproblem, "extract", return_value=better):
            return sca_solve(scn, opts=opts)

    def test_strict_raises(self, small_scenario):
        with pytest.raises(LinearizationError) as exc:
            self.run(small_scenario, strict=True)
        assert exc.value.details["iteration"] == 2
        assert exc.value.details["row"] == "cap"

    def test_lenient_continues(self, small_scenario):
        """Without strict mode the violation is logged and the loop goes on."""
        res = self.run(small_scenario, strict=False)
        assert res.iterations == 2
        assert res.records[1].active_caps == 0


class TestHoverStart:
    """Proposed-scheme start derived from a hovering jammer."""

    def hovering(self, scn, point):
        it = initialize(scn)
        return Trajectory(q_s=it.traj.q_s, q_j=np.tile(point, (scn.n_slots, 1)), p_s=it.traj.p_s)

    def test_flies_out_hovers_and_lands(self, scenario1):
        it = hover_start(scenario1, self.hovering(scenario1, [300.0, 0.0]))
        q_j = it.traj.q_j
        np.testing.assert_allclose(q_j[0], scenario1.j_start)
        np.testing.assert_allclose(q_j[-1], scenario1.j_end, atol=1e-9)
        np.testing.assert_allclose(q_j[21:29], np.tile([300.0, 0.0], (8, 1)))
        steps = np.linalg.norm(np.diff(q_j, axis=0), axis=1)
        assert steps.max() <= scenario1.j_step

    def test_power_stays_covert(self, scenario1):
        """The start passes the chain check of the proposed subproblem."""
        it = hover_start(scenario1, self.hovering(scenario1, [300.0, 10.0]))
        g = gamma_cap(Mode.SINGLE, scenario1.epsilon, scenario1.n_obs)
        limit = covert_power_limit(scenario1, it.traj.q_s, it.traj.q_j, g)
        assert np.all(it.traj.p_s <= np.maximum(limit, power_floor(scenario1, g)))
        _, violation = assemble_subproblem(scenario1, it).check_iterate()
        assert violation <= 1e-6

    def test_unreachable_point(self, scenario1):
        """A hover point J cannot reach and leave in time gives no start."""
        assert hover_start(scenario1, self.hovering(scenario1, [300.0, 400.0])) is None


class TestVerifyCovertness:
    """Sampled worst-case SINR per slot and warden."""

    def test_candidates(self):
        """Ring samples plus center, nearest-to-S and farthest-from-J points."""
        q_s = np.array([[100.0, 0.0], [0.0, 5.0]])
        q_j = np.array([[0.0, -50.0], [0.0, 0.0]])
        points = _candidates(np.zeros(2), 10.0, q_s, q_j, 8)
        assert points.shape == (2, 11, 2)
        np.testing.assert_allclose(np.linalg.norm(points[:, :8], axis=2), 10.0)
        np.testing.assert_allclose(points[0, 9], [10.0, 0.0])
        np.testing.assert_allclose(points[1, 9], [0.0, 5.0])
        np.testing.assert_allclose(points[0, 10], [0.0, 10.0])
        np.testing.assert_allclose(points[1, 10], [0.0, 0.0])

    @pytest.mark.parametrize("mode", list(Mode))
    def test_initial_point_is_covert(self, scenario1, mode):
        """The initial trajectory keeps every warden under the cap."""
        res = initial_result(scenario1, mode)
        report = verify_covertness(res, scenario1, mode, samples=72)
        assert len(report.entries) == 50 * 3
        assert report.max_ratio <= 1.0 + 1e-9
        assert report.ok()
        if mode is Mode.SINGLE:
            assert report.min_dep >= 0.95 - 1e-9
        else:
            assert all(e.pinsker >= 0.95 - 1e-9 for e in report.entries)

    def test_silent_trajectory(self, scenario1):
        """Zero power gives ratio zero and DEP one."""
        res = initial_result(scenario1)
        silent = res.final.traj.with_power(np.zeros(50))
        res.final = type(res.final)(traj=silent, d_prev=res.final.d_prev, c_prev=res.final.c_prev)
        report = verify_covertness(res, scenario1, samples=8)
        assert report.max_ratio == 0.0
        assert report.min_dep == 1.0

    def test_multi_dep_uses_antenna_detector(self, scenario1):
        """Multi-antenna entries report the K-antenna detector's error probability."""
        scn = scenario1.with_updates(n_antennas=4)
        res = initial_result(scn, Mode.MULTI)
        report = verify_covertness(res, scn, Mode.MULTI, samples=8)
        traj = res.final.traj
        for entry in report.entries[::37]:
            worst = np.array([entry.worst_x, entry.worst_y])
            inp = SlotDetectionInput(
                p_s=float(traj.p_s[entry.slot]),
                p_jam=scn.p_jam,
                gain_sw=gain_sq(traj.q_s[entry.slot], scn.s_alt, worst, scn.ref_gain),
                gain_jw=gain_sq(traj.q_j[entry.slot], scn.j_alt, worst, scn.ref_gain),
                noise=scn.noise_power,
            )
            assert entry.min_dep == pytest.approx(dep_multi(inp, scn.n_obs, 4), abs=1e-12)
            assert entry.min_dep >= entry.pinsker - 1e-12
