"""Desk-scale reproductions of the qualitative flow phenomena: a pinned
disk whose center climbs without bound between its barriers, bounded tilt
on steep mean-convex data, flattening of perturbed slices, recentred
convergence to the uniformly climbing profile, and the discrete ordering
principle the other runs lean on."""

import math
from dataclasses import dataclass

import numpy as np

from . import flow, geometry, grids
from .errors import (
    DsmcfError,
    ModeUnsupportedError,
    OutOfDomainError,
    SpanTooShortError,
)

# Fraction of the box size used as the recentred time half-window.  The
# box bounds the height; the limiting profile climbs at rate n, so a full
# height excursion corresponds to a third of the box in flow time, and
# staying strictly inside that keeps converged runs clear of the height
# clip at the window ends.
RESCALE_TIME_FRACTION = 0.3


def _grid_tolerance(h: float) -> float:
    """Ordering slack allowed for discretization, 10 h^2."""
    return 10.0 * h * h


def _completed(traj: flow.Trajectory) -> flow.Trajectory:
    if traj.failure is not None:
        raise DsmcfError(f"flow run failed: {traj.failure}")
    return traj


def _profile_at(s_values: np.ndarray, profiles: np.ndarray, tau: float) -> np.ndarray:
    """Linear time interpolation of stacked per-snapshot node arrays."""
    j = int(np.searchsorted(s_values, tau))
    j = min(max(j, 1), len(s_values) - 1)
    left, right = s_values[j - 1], s_values[j]
    theta = 0.0 if right == left else (tau - left) / (right - left)
    return (1.0 - theta) * profiles[j - 1] + theta * profiles[j]


def _snapshot_profiles(traj: flow.Trajectory) -> np.ndarray:
    return np.stack([st.u.values for st in traj.snapshots])


# ---------------------------------------------------------------------------
# pinned disk


@dataclass(frozen=True)
class BarrierResult:
    """Center-height history of the pinned-disk run.

    The center must stay between 0 and n*s (every slice started above the
    disk is an upper barrier) while growing monotonically; the recorded
    slack series measures how much room the self-similar stepping
    inequality has, with the shift constant taken from the run itself.
    """

    s: np.ndarray
    center_height: np.ndarray
    upper_bound: np.ndarray
    monotone: bool
    within_bounds: bool
    tolerance: float
    shift_constant: float
    translation_s: np.ndarray
    translation_slack: np.ndarray
    steps: int = 0

    def __post_init__(self):
        if not (len(self.s) == len(self.center_height) == len(self.upper_bound)):
            raise ValueError("series lengths must match")
        if len(self.translation_s) != len(self.translation_slack):
            raise ValueError("translation series lengths must match")

    def first_crossing(self, level: float) -> float | None:
        """First flow time at which the center height reaches ``level``."""
        above = np.nonzero(self.center_height >= level)[0]
        if len(above) == 0:
            return None
        k = int(above[0])
        if k == 0:
            return float(self.s[0])
        w0, w1 = self.center_height[k - 1], self.center_height[k]
        frac = (level - w0) / (w1 - w0) if w1 > w0 else 1.0
        return float(self.s[k - 1] + frac * (self.s[k] - self.s[k - 1]))

    def as_dict(self) -> dict:
        return {
            "s": [float(x) for x in self.s],
            "center_height": [float(x) for x in self.center_height],
            "upper_bound": [float(x) for x in self.upper_bound],
            "monotone": self.monotone,
            "within_bounds": self.within_bounds,
            "tolerance": self.tolerance,
            "shift_constant": self.shift_constant,
            "translation_s": [float(x) for x in self.translation_s],
            "translation_slack": [float(x) for x in self.translation_slack],
            "steps": self.steps,
        }


def _translation_series(s, profiles, grid: grids.Grid, disk_radius: float):
    """Shift constant c and the slack of w(x, 1+s) >= w(e^c x, s) + c.

    c is the measured center height at unit flow time.  The comparison
    only makes sense at radii that stay inside the disk after stretching
    by e^c, and needs the run to cover [s, 1+s]; outside that, the series
    is empty and c is nan.
    """
    if s[-1] < 1.0 or disk_radius <= 1.0:
        return math.nan, np.empty(0), np.empty(0)
    c = float(np.interp(1.0, s, profiles[:, 0]))
    stretch = math.exp(c)
    rho = grid.axis()
    sel = rho <= (disk_radius - 1.0) / stretch
    out_s, out_slack = [], []
    for k, sk in enumerate(s):
        if sk + 1.0 > s[-1] + 1e-12:
            break
        later = _profile_at(s, profiles, sk + 1.0)
        shifted = np.interp(stretch * rho[sel], rho, profiles[k])
        out_s.append(float(sk))
        out_slack.append(float(np.min(later[sel] - shifted - c)))
    return c, np.array(out_s), np.array(out_slack)


def barrier_run(
    R2: float, grid: grids.Grid, config: flow.FlowConfig
) -> BarrierResult:
    """Evolve the flat disk of radius R2 pinned to height zero at its rim.

    Starts from u = 0 with a pinned boundary and records the center
    height, validating 0 <= u <= n*s + tol at every snapshot (tol is the
    10 h^2 discretization allowance) and the monotone growth of the
    center.  The translation slack series quantifies the stepping
    inequality that forces the center to infinity.
    """
    if grid.mode != grids.RADIAL:
        raise ModeUnsupportedError("the pinned-disk run needs a radial grid")
    if abs(grid.extent - R2) > 1e-9 * max(1.0, R2):
        raise ValueError(
            f"grid extent {grid.extent:.6g} must equal the disk radius {R2:.6g}"
        )
    state = flow.GraphState(
        u=grids.Field(grid, np.zeros(grid.shape)),
        s=0.0,
        bc=flow.BoundaryCondition(flow.PINNED),
    )
    traj = _completed(flow.run(state, config))
    s = traj.s_values()
    profiles = _snapshot_profiles(traj)
    center = profiles[:, 0].copy()
    upper = grid.dimension * s
    tol = _grid_tolerance(grid.spacing)
    within = bool(
        np.all(profiles.min(axis=1) >= -tol)
        and np.all(profiles.max(axis=1) <= upper + tol)
    )
    monotone = bool(np.all(np.diff(center) >= -1e-12))
    c, ts, slack = _translation_series(s, profiles, grid, R2)
    return BarrierResult(
        s=s,
        center_height=center,
        upper_bound=upper,
        monotone=monotone,
        within_bounds=within,
        tolerance=tol,
        shift_constant=c,
        translation_s=ts,
        translation_slack=slack,
        steps=traj.steps,
    )


# ---------------------------------------------------------------------------
# tilt bound on steep data


@dataclass(frozen=True)
class GradientBoundResult:
    """Supremum of v over the comoving window, per snapshot."""

    s: np.ndarray
    sup_tilt: np.ndarray
    alpha: float
    region: float
    bounded: bool
    steps: int = 0

    def as_dict(self) -> dict:
        return {
            "s": [float(x) for x in self.s],
            "sup_tilt": [float(x) for x in self.sup_tilt],
            "alpha": self.alpha,
            "region": self.region,
            "bounded": self.bounded,
            "steps": self.steps,
        }


def _no_growth_trend(series: np.ndarray) -> bool:
    """True when the final third never rises above the earlier maximum."""
    cut = max(1, (2 * len(series)) // 3)
    if cut >= len(series):
        return True
    tol = 1e-9 * max(1.0, float(np.max(np.abs(series))))
    return bool(np.max(series[cut:]) <= np.max(series[:cut]) + tol)


def gradient_bound_run(
    initial: flow.GraphState, alpha: float, R: float, config: flow.FlowConfig
) -> GradientBoundResult:
    """Track sup v over the shrinking window e^{alpha u} |x|^2 <= R/2.

    The window follows the surface upward: as the height climbs the
    admissible radius contracts, which is what lets steep initial data
    settle to a bounded tilt there.  The result flags whether the series
    stopped growing over the final third of the run.  Mean convexity of
    the initial data is the caller's responsibility; runs violating it
    are reported, not rejected.
    """
    if not (0.0 < alpha < 2.0):
        raise ValueError(f"alpha must lie in (0, 2), got {alpha}")
    if R <= 0.0:
        raise ValueError(f"window size must be positive, got {R}")
    traj = _completed(flow.run(initial, config))
    radius_sq = initial.grid.radius_squared()
    sup = np.empty(len(traj.snapshots))
    for k, st in enumerate(traj.snapshots):
        geom = geometry.GeometryFields(st.grid, st.u.values)
        inside = np.exp(alpha * geom.u) * radius_sq <= 0.5 * R
        sup[k] = float(np.max(geom.v[inside]))
    return GradientBoundResult(
        s=traj.s_values(),
        sup_tilt=sup,
        alpha=alpha,
        region=R,
        bounded=_no_growth_trend(sup),
        steps=traj.steps,
    )


# ---------------------------------------------------------------------------
# flattening of a perturbed slice


@dataclass(frozen=True)
class FlatnessResult:
    """Decay of the tilt excess sup(v - 1) on the inner half-region."""

    s: np.ndarray
    tilt_excess: np.ndarray
    height_spread: np.ndarray
    theta: float
    flattening_time: float | None
    reached: bool
    eventually_decreasing: bool
    steps: int = 0

    def __post_init__(self):
        if not (len(self.s) == len(self.tilt_excess) == len(self.height_spread)):
            raise ValueError("series lengths must match")

    def as_dict(self) -> dict:
        return {
            "s": [float(x) for x in self.s],
            "tilt_excess": [float(x) for x in self.tilt_excess],
            "height_spread": [float(x) for x in self.height_spread],
            "theta": self.theta,
            "flattening_time": self.flattening_time,
            "reached": self.reached,
            "eventually_decreasing": self.eventually_decreasing,
            "steps": self.steps,
        }


def flatness_run(
    initial: flow.GraphState, theta: float, config: flow.FlowConfig
) -> FlatnessResult:
    """Flow a perturbed slice and record when it is theta-flat inside.

    Per snapshot, the tilt excess sup(v - 1) and the height spread
    sup |u - mean u| are taken over the inner half-region (radius up to
    half the grid extent).  The flattening time is the first snapshot
    with excess <= theta; hitting the end of the run first is reported
    through ``reached``, not raised.
    """
    if not (0.0 < theta < 1.0):
        raise ValueError(f"theta must lie in (0, 1), got {theta}")
    traj = _completed(flow.run(initial, config))
    grid = initial.grid
    inner = grid.radius_squared() <= (0.5 * grid.extent) ** 2
    excess = np.empty(len(traj.snapshots))
    spread = np.empty(len(traj.snapshots))
    for k, st in enumerate(traj.snapshots):
        geom = geometry.GeometryFields(st.grid, st.u.values)
        excess[k] = max(0.0, float(np.max(geom.v[inner])) - 1.0)
        u_in = st.u.values[inner]
        spread[k] = float(np.max(np.abs(u_in - np.mean(u_in))))
    s = traj.s_values()
    hits = np.nonzero(excess <= theta)[0]
    reached = len(hits) > 0
    flattening = float(s[hits[0]]) if reached else None
    cut = max(1, (2 * len(excess)) // 3)
    tail = excess[cut:]
    decreasing = bool(
        len(tail) < 2 or np.all(np.diff(tail) <= 1e-12 * max(1.0, tail[0]))
    )
    return FlatnessResult(
        s=s,
        tilt_excess=excess,
        height_spread=spread,
        theta=theta,
        flattening_time=flattening,
        reached=reached,
        eventually_decreasing=decreasing,
        steps=traj.steps,
    )


# ---------------------------------------------------------------------------
# recentred convergence


@dataclass(frozen=True)
class RescaledField:
    """One recentred window of a trajectory.

    ``u`` holds the recentred heights u(e^{-a} x, s + lam) - a on the box
    nodes, sampled at the recentred times in ``s``; ``tilt`` holds v on
    the same samples (v is invariant under the recentring isometry).
    ``inside`` marks the samples whose height stays within the box.
    """

    lam: float
    rho: float
    offset: float
    climb_rate: float
    s: np.ndarray
    points: np.ndarray
    u: np.ndarray
    tilt: np.ndarray
    inside: np.ndarray

    def height_error(self) -> float:
        """sup over the box of |u - climb_rate * s|."""
        target = self.climb_rate * self.s[:, None]
        gaps = np.abs(self.u - target)[self.inside]
        return float(np.max(gaps)) if gaps.size else math.nan

    def tilt_error(self) -> float:
        """sup over the box of v - 1, clamped at zero."""
        vals = self.tilt[self.inside]
        if not vals.size:
            return math.nan
        return max(0.0, float(np.max(vals)) - 1.0)


def _box_points(grid: grids.Grid, rho: float) -> np.ndarray:
    if grid.mode == grids.RADIAL:
        radii = grid.axis()
        sel = radii <= rho + 1e-12 * max(1.0, rho)
        pts = np.zeros((int(np.sum(sel)), grid.dimension))
        pts[:, 0] = radii[sel]
        return pts
    mesh = grid.meshes()
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    sel = np.sum(pts**2, axis=-1) <= rho**2 + 1e-12 * max(1.0, rho**2)
    return pts[sel]


def rescale_trajectory(
    traj: flow.Trajectory, lam: float, rho: float
) -> RescaledField:
    """Recentre a trajectory at flow time lam on the box of size rho.

    The surface is shifted by the ambient isometry that moves its point
    over the origin at time lam back to height zero, so the recentred
    height vanishes at the space-time origin by construction.  Heights
    come from spatial interpolation of the snapshot profiles and linear
    interpolation in time; the recentred times cover a fixed fraction of
    the box on either side of zero.
    """
    if rho <= 0.0:
        raise ValueError(f"box size must be positive, got {rho}")
    grid = traj.final.grid
    if rho > grid.extent + 1e-12 * max(1.0, grid.extent):
        raise OutOfDomainError(
            f"lambda {lam:.6g}: box radius {rho:.6g} exceeds the grid extent "
            f"{grid.extent:.6g}"
        )
    s = traj.s_values()
    half = RESCALE_TIME_FRACTION * rho
    pad = 1e-12 * max(1.0, abs(float(s[-1])))
    if lam - half < s[0] - pad or lam + half > s[-1] + pad:
        raise SpanTooShortError(
            f"recentred window [{lam - half:.6g}, {lam + half:.6g}] outside the "
            f"recorded span [{s[0]:.6g}, {s[-1]:.6g}]"
        )

    profiles = _snapshot_profiles(traj)
    tilts = np.stack(
        [geometry.GeometryFields(grid, st.u.values).v for st in traj.snapshots]
    )
    origin = np.zeros(grid.dimension)
    offset = float(
        grids.interpolate(grids.Field(grid, _profile_at(s, profiles, lam)), origin)
    )
    shrink = math.exp(-offset)
    points = _box_points(grid, rho)
    pulled = shrink * points
    reach = math.sqrt(float(np.max(np.sum(pulled**2, axis=-1)))) if len(pulled) else 0.0
    if reach > grid.extent + 1e-12 * max(1.0, grid.extent):
        raise OutOfDomainError(
            f"lambda {lam:.6g}: box radius {rho:.6g} pulls back to {reach:.6g}, "
            f"outside the grid extent {grid.extent:.6g}"
        )

    inside_window = s[(s >= lam - half - pad) & (s <= lam + half + pad)]
    times = np.unique(
        np.concatenate([inside_window, [lam - half, lam, lam + half]])
    )
    u_out = np.empty((len(times), len(points)))
    v_out = np.empty_like(u_out)
    for j, tau in enumerate(times):
        u_prof = grids.Field(grid, _profile_at(s, profiles, tau))
        v_prof = grids.Field(grid, _profile_at(s, tilts, tau))
        u_out[j] = np.asarray(grids.interpolate(u_prof, pulled)) - offset
        v_out[j] = np.asarray(grids.interpolate(v_prof, pulled))
    shifted = times - lam
    inside = np.abs(u_out) <= rho + 1e-12 * max(1.0, rho)
    return RescaledField(
        lam=lam,
        rho=rho,
        offset=offset,
        climb_rate=float(grid.dimension),
        s=shifted,
        points=points,
        u=u_out,
        tilt=v_out,
        inside=inside,
    )


@dataclass(frozen=True)
class RescaleTable:
    """Convergence table: recentring error per recentring time."""

    lambdas: np.ndarray
    height_error: np.ndarray
    tilt_error: np.ndarray
    rho: float
    decreasing: bool

    def __post_init__(self):
        if not (len(self.lambdas) == len(self.height_error) == len(self.tilt_error)):
            raise ValueError("table columns must have one entry per lambda")
        if np.any(np.diff(self.lambdas) <= 0.0):
            raise ValueError("lambda values must be strictly increasing")

    def as_dict(self) -> dict:
        return {
            "lambdas": [float(x) for x in self.lambdas],
            "height_error": [float(x) for x in self.height_error],
            "tilt_error": [float(x) for x in self.tilt_error],
            "rho": self.rho,
            "decreasing": self.decreasing,
        }


def convergence_table(
    traj: flow.Trajectory, lambdas, rho: float
) -> RescaleTable:
    """Recentre at several times and tabulate both error suprema.

    Later recentrings of a converging run should sit closer to the
    uniformly climbing profile; the ``decreasing`` flag records whether
    both columns are strictly decreasing.
    """
    lams = np.asarray(lambdas, dtype=float)
    if lams.ndim != 1 or len(lams) == 0:
        raise ValueError("need a one-dimensional, non-empty list of lambdas")
    if np.any(np.diff(lams) <= 0.0):
        raise ValueError("lambda values must be strictly increasing")
    height = np.empty(len(lams))
    tilt = np.empty(len(lams))
    for k, lam in enumerate(lams):
        window = rescale_trajectory(traj, float(lam), rho)
        height[k] = window.height_error()
        tilt[k] = window.tilt_error()
    decreasing = bool(np.all(np.diff(height) < 0.0) and np.all(np.diff(tilt) < 0.0))
    return RescaleTable(
        lambdas=lams,
        height_error=height,
        tilt_error=tilt,
        rho=rho,
        decreasing=decreasing,
    )


# ---------------------------------------------------------------------------
# discrete ordering principle


@dataclass(frozen=True)
class ComparisonResult:
    """Worst signed gap max(u_low - u_high) per matched snapshot."""

    s: np.ndarray
    worst_gap: np.ndarray
    tolerance: float
    ordered: bool
    steps: int = 0

    def as_dict(self) -> dict:
        return {
            "s": [float(x) for x in self.s],
            "worst_gap": [float(x) for x in self.worst_gap],
            "tolerance": self.tolerance,
            "ordered": self.ordered,
            "steps": self.steps,
        }


def comparison_run(
    low: flow.GraphState, high: flow.GraphState, config: flow.FlowConfig
) -> ComparisonResult:
    """Evolve two ordered initial states and check they stay ordered.

    Both states must share a grid and boundary kind, with the first below
    the second.  The upper run is interpolated in time onto the lower
    run's snapshot times, and the flows count as ordered when the lower
    one never exceeds the upper by more than the 10 h^2 allowance.
    """
    if (
        low.grid.mode != high.grid.mode
        or low.grid.dimension != high.grid.dimension
        or low.grid.resolution != high.grid.resolution
        or abs(low.grid.extent - high.grid.extent) > 1e-12
    ):
        raise ValueError("comparison states must share a grid")
    if low.bc.kind != high.bc.kind:
        raise ValueError("comparison states must share a boundary kind")
    if np.any(low.u.values > high.u.values + 1e-12):
        raise ValueError("initial data must be ordered: first below second")

    lo = _completed(flow.run(low, config))
    hi = _completed(flow.run(high, config))
    s_lo = lo.s_values()
    s_hi = hi.s_values()
    hi_profiles = _snapshot_profiles(hi)
    tol = _grid_tolerance(low.grid.spacing)
    gaps = np.empty(len(lo.snapshots))
    for k, st in enumerate(lo.snapshots):
        tau = min(max(float(s_lo[k]), float(s_hi[0])), float(s_hi[-1]))
        upper = _profile_at(s_hi, hi_profiles, tau)
        gaps[k] = float(np.max(st.u.values - upper))
    return ComparisonResult(
        s=s_lo,
        worst_gap=gaps,
        tolerance=tol,
        ordered=bool(np.all(gaps <= tol)),
        steps=lo.steps + hi.steps,
    )
