"""Scripted-run checks: the pinned disk climbing between its barriers, tilt
decay on steep ramps, flattening of wrinkled slices, recentred convergence
to the uniformly climbing profile, and pairwise ordering of flows."""

import numpy as np
import pytest

from dsmcf import experiments, flow, grids
from dsmcf.errors import (
    ModeUnsupportedError,
    OutOfDomainError,
    SpanTooShortError,
)


def radial_grid(resolution, extent=3.0):
    return grids.Grid(grids.RADIAL, 3, extent=extent, resolution=resolution)


def slicing_state(grid, u0):
    return flow.GraphState(
        u=grids.Field(grid, u0), s=0.0, bc=flow.BoundaryCondition(flow.SLICING)
    )


def wrinkled_profile(rho):
    """Oscillatory perturbation, normalized to peak height 0.2."""
    f = np.sin(3.0 * rho) * np.exp(-((rho / 1.2) ** 2))
    return 0.2 * f / np.max(np.abs(f))


def synthetic_trajectory(grid, s_values, family):
    snaps = [
        flow.GraphState(
            u=grids.Field(grid, family(float(s))),
            s=float(s),
            bc=flow.BoundaryCondition(flow.FROZEN),
        )
        for s in s_values
    ]
    return flow.Trajectory(
        snapshots=snaps,
        dt_history=np.diff(s_values),
        diagnostics=[],
        failure=None,
    )


@pytest.fixture(scope="module")
def flattening_trajectory():
    grid = radial_grid(257)
    state = slicing_state(grid, wrinkled_profile(grid.axis()))
    return flow.run(state, flow.FlowConfig(cfl_safety=0.5, s_end=1.6))


class TestBarrier:
    def test_pinned_disk_climbs_between_barriers(self):
        grid = radial_grid(65, extent=4.0)
        cfg = flow.FlowConfig(integrator="euler", cfl_safety=0.5, s_end=0.45)
        res = experiments.barrier_run(4.0, grid, cfg)

        assert res.s[0] == 0.0
        assert res.center_height[0] == 0.0
        assert res.monotone
        assert res.within_bounds
        assert np.all(res.upper_bound == 3.0 * res.s)
        # center follows the free climb rate almost exactly, so the first
        # crossing of 1.0 sits at one third
        crossing = res.first_crossing(1.0)
        assert abs(crossing - 1.0 / 3.0) < 0.02

    def test_short_run_has_no_shift_constant(self):
        grid = radial_grid(33, extent=4.0)
        cfg = flow.FlowConfig(integrator="euler", cfl_safety=0.5, s_end=0.3)
        res = experiments.barrier_run(4.0, grid, cfg)
        assert np.isnan(res.shift_constant)
        assert len(res.translation_s) == 0
        assert len(res.translation_slack) == 0

    def test_rejects_cartesian_grid(self):
        grid = grids.Grid(grids.CARTESIAN, 2, extent=4.0, resolution=9)
        with pytest.raises(ModeUnsupportedError):
            experiments.barrier_run(4.0, grid, flow.FlowConfig())

    def test_rejects_mismatched_extent(self):
        with pytest.raises(ValueError, match="extent"):
            experiments.barrier_run(4.0, radial_grid(33), flow.FlowConfig())

    def test_translation_slack_vanishes_for_flat_family(self):
        # the stepped inequality holds with equality when every profile is a
        # flat slice: stretching a constant profile changes nothing
        grid = radial_grid(129, extent=4.0)
        s_values = np.linspace(0.0, 1.5, 61)
        profiles = np.stack([3.0 * s + np.zeros(grid.shape) for s in s_values])
        c, slack_s, slacks = experiments._translation_series(
            s_values, profiles, grid, 4.0
        )
        assert c == pytest.approx(3.0)
        assert len(slack_s) == len(slacks) > 0
        assert np.max(np.abs(slacks)) < 1e-12

    def test_translation_slack_empty_below_unit_disk(self):
        grid = radial_grid(33, extent=0.8)
        s_values = np.linspace(0.0, 1.5, 16)
        profiles = np.zeros((16, grid.shape[0]))
        c, _, slacks = experiments._translation_series(
            s_values, profiles, grid, 0.8
        )
        assert np.isnan(c)
        assert len(slacks) == 0


class TestGradientBound:
    def test_flat_slice_stays_at_one(self):
        grid = radial_grid(33)
        state = slicing_state(grid, np.zeros(grid.shape))
        res = experiments.gradient_bound_run(
            state, 0.5, 1.0, flow.FlowConfig(s_end=0.3)
        )
        assert res.bounded
        assert np.max(np.abs(res.sup_tilt - 1.0)) < 1e-12

    def test_steep_ramp_decays_after_transient(self):
        # constant-boost ramp: e^{-u} = 1 - c*rho has tilt 5 at every node
        c = np.sqrt(1.0 - 1.0 / 25.0)
        grid = radial_grid(65, extent=0.6)
        state = slicing_state(grid, -np.log(1.0 - c * grid.axis()))
        res = experiments.gradient_bound_run(
            state,
            0.5,
            0.36,
            flow.FlowConfig(integrator="euler", cfl_safety=0.5, s_end=0.05),
        )
        assert res.sup_tilt[0] > 4.9
        assert res.sup_tilt[-1] < 2.0
        assert res.bounded
        assert np.all(np.diff(res.sup_tilt[2:]) <= 1e-9)

    @pytest.mark.parametrize("alpha", [0.0, 2.0, -0.3])
    def test_rejects_alpha_outside_open_interval(self, alpha):
        grid = radial_grid(33)
        state = slicing_state(grid, np.zeros(grid.shape))
        with pytest.raises(ValueError, match="alpha"):
            experiments.gradient_bound_run(state, alpha, 1.0, flow.FlowConfig())

    def test_rejects_nonpositive_region(self):
        grid = radial_grid(33)
        state = slicing_state(grid, np.zeros(grid.shape))
        with pytest.raises(ValueError):
            experiments.gradient_bound_run(state, 0.5, 0.0, flow.FlowConfig())


class TestFlatness:
    def test_flat_slice_is_flat_immediately(self):
        grid = radial_grid(33)
        state = slicing_state(grid, np.zeros(grid.shape))
        res = experiments.flatness_run(state, 0.05, flow.FlowConfig(s_end=0.2))
        assert res.reached
        assert res.flattening_time == 0.0
        assert np.max(res.tilt_excess) < 1e-12
        assert np.max(res.height_spread) < 1e-12

    def test_wrinkled_slice_records_finite_crossing(self):
        grid = radial_grid(257)
        state = slicing_state(grid, wrinkled_profile(grid.axis()))
        res = experiments.flatness_run(
            state, 0.05, flow.FlowConfig(cfl_safety=0.5, s_end=0.25)
        )
        assert res.tilt_excess[0] > 0.3
        assert res.reached
        assert 0.005 < res.flattening_time < 0.05
        assert res.eventually_decreasing
        assert res.height_spread[-1] < res.height_spread[0]

    def test_crossing_time_stable_under_refinement(self):
        times = []
        for resolution in (129, 257):
            grid = radial_grid(resolution)
            state = slicing_state(grid, wrinkled_profile(grid.axis()))
            res = experiments.flatness_run(
                state,
                0.05,
                flow.FlowConfig(cfl_safety=0.5, s_end=0.25, snapshot_stride=20),
            )
            assert res.reached
            times.append(res.flattening_time)
        assert abs(times[1] - times[0]) < 0.05 * times[0]

    def test_unreached_threshold_is_reported_not_fatal(self):
        grid = radial_grid(129)
        state = slicing_state(grid, wrinkled_profile(grid.axis()))
        res = experiments.flatness_run(
            state, 1e-4, flow.FlowConfig(cfl_safety=0.5, s_end=0.03)
        )
        assert not res.reached
        assert res.flattening_time is None

    @pytest.mark.parametrize("theta", [0.0, 1.0, -0.2])
    def test_rejects_theta_outside_open_interval(self, theta):
        grid = radial_grid(33)
        state = slicing_state(grid, np.zeros(grid.shape))
        with pytest.raises(ValueError, match="theta"):
            experiments.flatness_run(state, theta, flow.FlowConfig())


class TestRescale:
    def test_lambda_zero_returns_original_fields(self):
        grid = radial_grid(257)
        rho = grid.axis()
        family = lambda s: 3.0 * s + 0.1 * (1.0 - np.exp(-(rho**2))) * np.exp(-s)
        traj = synthetic_trajectory(grid, np.linspace(-0.5, 0.5, 81), family)
        field = experiments.rescale_trajectory(traj, 0.0, 1.0)
        radii = np.sqrt(np.sum(field.points**2, axis=1))
        worst = max(
            float(np.max(np.abs(field.u[i] - np.interp(radii, rho, family(sv)))))
            for i, sv in enumerate(field.s)
        )
        assert worst < 1e-12

    def test_origin_value_is_exactly_zero(self, flattening_trajectory):
        field = experiments.rescale_trajectory(flattening_trajectory, 0.8, 1.0)
        at_zero = np.flatnonzero(field.s == 0.0)
        assert len(at_zero) == 1
        assert np.all(field.points[0] == 0.0)
        assert abs(field.u[at_zero[0]][0]) < 1e-14

    def test_matches_snapshotwise_recentring(self, flattening_trajectory):
        traj = flattening_trajectory
        grid = traj.final.grid
        rho = grid.axis()
        s_all = traj.s_values()
        profiles = np.stack([snap.u.values for snap in traj.snapshots])
        lam = 0.8
        field = experiments.rescale_trajectory(traj, lam, 1.0)
        shift = float(np.interp(lam, s_all, profiles[:, 0]))
        radii = np.sqrt(np.sum(field.points**2, axis=1))
        for i, sv in enumerate(field.s):
            snap_u = experiments._profile_at(s_all, profiles, sv + lam)
            recentred = flow.isometry_shift_state(
                flow.GraphState(
                    u=grids.Field(grid, snap_u),
                    s=0.0,
                    bc=flow.BoundaryCondition(flow.FROZEN),
                ),
                shift,
            )
            expected = np.interp(radii, rho, recentred.u.values)
            assert np.max(np.abs(field.u[i] - expected)) < 1e-12

    def test_rejects_nonpositive_box(self, flattening_trajectory):
        with pytest.raises(ValueError):
            experiments.rescale_trajectory(flattening_trajectory, 0.8, 0.0)

    def test_window_outside_span_raises(self, flattening_trajectory):
        with pytest.raises(SpanTooShortError, match="recorded span"):
            experiments.rescale_trajectory(flattening_trajectory, 1.5, 1.0)

    def test_box_beyond_grid_names_lambda(self, flattening_trajectory):
        with pytest.raises(OutOfDomainError, match="lambda 0.8"):
            experiments.rescale_trajectory(flattening_trajectory, 0.8, 5.0)


class TestConvergenceTable:
    def test_columns_decrease_on_flattening_run(self, flattening_trajectory):
        table = experiments.convergence_table(
            flattening_trajectory, np.array([0.4, 0.8, 1.2]), 1.0
        )
        assert table.decreasing
        assert np.all(np.diff(table.height_error) < 0)
        assert np.all(np.diff(table.tilt_error) < 0)
        assert np.all(table.height_error > 0)

    def test_flat_trajectory_gives_zero_rows(self):
        grid = radial_grid(65)
        state = slicing_state(grid, np.zeros(grid.shape))
        traj = flow.run(
            state, flow.FlowConfig(dt_fixed=1e-3, s_end=1.6)
        )
        table = experiments.convergence_table(
            traj, np.array([0.4, 0.8, 1.2]), 1.0
        )
        assert np.max(table.height_error) < 1e-12
        assert np.max(table.tilt_error) == 0.0

    def test_rejects_unsorted_lambdas(self, flattening_trajectory):
        with pytest.raises(ValueError, match="strictly increasing"):
            experiments.convergence_table(
                flattening_trajectory, np.array([0.8, 0.4]), 1.0
            )


class TestComparison:
    def make_pair(self):
        grid = radial_grid(129)
        rho = grid.axis()
        low = slicing_state(grid, 0.15 * np.exp(-(rho**2)) - 0.15)
        high = slicing_state(grid, 0.1 + 0.05 * np.cos(rho))
        return low, high

    def test_ordered_pair_stays_ordered(self):
        low, high = self.make_pair()
        res = experiments.comparison_run(
            low, high, flow.FlowConfig(cfl_safety=0.5, s_end=1.0)
        )
        assert res.ordered
        assert np.all(res.worst_gap <= res.tolerance)
        assert res.tolerance == pytest.approx(10.0 * low.grid.spacing**2)

    def test_rejects_mismatched_grids(self):
        low, _ = self.make_pair()
        other = radial_grid(65)
        high = slicing_state(other, np.full(other.shape, 0.2))
        with pytest.raises(ValueError, match="share a grid"):
            experiments.comparison_run(low, high, flow.FlowConfig())

    def test_rejects_mismatched_boundary_kinds(self):
        low, high = self.make_pair()
        high = flow.GraphState(
            u=high.u, s=0.0, bc=flow.BoundaryCondition(flow.FROZEN)
        )
        with pytest.raises(ValueError, match="boundary kind"):
            experiments.comparison_run(low, high, flow.FlowConfig())

    def test_rejects_unordered_initial_data(self):
        low, high = self.make_pair()
        with pytest.raises(ValueError, match="ordered"):
            experiments.comparison_run(high, low, flow.FlowConfig())


def test_halving_cfl_changes_less_than_grid_error():
    grid = radial_grid(129)
    state = slicing_state(grid, wrinkled_profile(grid.axis()))
    finals = []
    for cfl in (0.5, 0.25):
        traj = flow.run(state, flow.FlowConfig(cfl_safety=cfl, s_end=0.4))
        assert traj.failure is None
        finals.append(traj.final.u.values)
    assert np.max(np.abs(finals[0] - finals[1])) < 10.0 * grid.spacing**2
