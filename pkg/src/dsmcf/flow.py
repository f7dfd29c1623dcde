"""Explicit time stepping for the graphical expansion flow.

The graph moves so that its normal velocity equals its mean curvature H.
In the fixed spatial chart that is the quasilinear parabolic equation

    du/ds = H / v,

whose right-hand side ``graph_speed_fields`` provides (H/v is the vertical
speed of the surface; along the normal trajectories themselves the height
grows at the faster material rate H v, see the oracles module).  Flat
slices u = c + n s solve the equation exactly, also discretely, because
every stencil annihilates constants.

Integrators are explicit (euler, rk2 midpoint, classical rk4).  Boundary
values are re-imposed after every stage at the stage time, so the slicing
boundary condition does not degrade the integrator order.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import geometry, grids
from .errors import (
    BlowupError,
    DsmcfError,
    NonSpacelikeError,
    NonUniformWindowError,
    OutOfDomainError,
    WindowTooShortError,
)

PINNED = "pinned"
SLICING = "slicing"
FROZEN = "frozen"
BC_KINDS = (PINNED, SLICING, FROZEN)

INTEGRATORS = ("euler", "rk2", "rk4")

MEAN_CONVEXITY_TOL = 1e-8


@dataclass(frozen=True)
class BoundaryCondition:
    """Boundary rule for the height field.

    * ``pinned``: boundary stays at one constant height.
    * ``slicing``: boundary follows the flat-slice motion u0 + n (s - s0).
    * ``frozen``: boundary keeps its (possibly non-constant) initial values.

    ``values`` holds the bound boundary data (in boundary-mask order); an
    unbound condition (values None) is bound by ``run`` from the initial
    state.
    """

    kind: str
    values: np.ndarray | float | None = None
    s0: float = 0.0

    def __post_init__(self):
        if self.kind not in BC_KINDS:
            raise ValueError(f"unknown boundary kind {self.kind!r}")

    def bound_to(self, state: "GraphState") -> "BoundaryCondition":
        if self.values is not None:
            return self
        bvals = state.u.values[state.grid.boundary_mask()]
        if self.kind == PINNED:
            const = float(bvals[0])
            if np.max(np.abs(bvals - const)) > 1e-12 * max(1.0, abs(const)):
                raise ValueError(
                    "pinned boundary requires constant initial boundary values"
                )
            return replace(self, values=const, s0=state.s)
        return replace(self, values=bvals.copy(), s0=state.s)

    def apply(self, values: np.ndarray, s: float, grid: grids.Grid) -> None:
        """Overwrite boundary nodes of ``values`` in place for time s."""
        if self.values is None:
            raise DsmcfError("boundary condition was never bound to a state")
        mask = grid.boundary_mask()
        if self.kind == PINNED:
            values[mask] = self.values
        elif self.kind == FROZEN:
            values[mask] = self.values
        else:  # slicing
            values[mask] = self.values + grid.dimension * (s - self.s0)


@dataclass
class GraphState:
    """Height field at one flow time."""

    u: grids.Field
    s: float
    bc: BoundaryCondition

    @property
    def grid(self) -> grids.Grid:
        return self.u.grid

    def copy(self) -> "GraphState":
        return GraphState(u=self.u.copy(), s=self.s, bc=self.bc)


@dataclass(frozen=True)
class FlowConfig:
    """Stepping parameters.

    ``cfl_safety`` scales the parabolic stable step; ``dt_max`` caps the
    step where the diffusion bound becomes huge (high slices make e^{2u}
    enormous while the reaction terms still move at unit rate in s).
    ``dt_fixed`` forces a constant step, which the checking windows need.
    """

    integrator: str = "rk2"
    cfl_safety: float = 0.25
    s_end: float = 1.0
    max_steps: int = 20_000_000
    snapshot_stride: int = 100
    margin_floor: float = geometry.MARGIN_FLOOR
    blowup_cap: float = 1e3
    dt_max: float = 0.05
    dt_fixed: float | None = None

    def __post_init__(self):
        if self.integrator not in INTEGRATORS:
            raise ValueError(f"unknown integrator {self.integrator!r}")
        if not (0.0 < self.cfl_safety <= 1.0):
            raise ValueError("cfl_safety must lie in (0, 1]")
        if not (self.s_end > 0.0):
            raise ValueError("s_end must be positive")
        if self.max_steps < 1 or self.snapshot_stride < 1:
            raise ValueError("max_steps and snapshot_stride must be >= 1")


@dataclass(frozen=True)
class StepDiagnostics:
    """Cheap per-step health numbers, sampled at snapshot times."""

    s: float
    dt: float
    min_margin: float
    max_v: float
    min_H: float
    max_H: float
    mean_convexity_violations: int


@dataclass
class Trajectory:
    """Recorded flow run: snapshots plus per-snapshot step data."""

    snapshots: list = field(default_factory=list)
    dt_history: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    failure: str | None = None
    steps: int = 0

    @property
    def final(self) -> GraphState:
        return self.snapshots[-1]

    def s_values(self) -> np.ndarray:
        return np.array([st.s for st in self.snapshots])

    def window(self, index: int) -> "TrajectoryWindow":
        """Three consecutive snapshots centered at ``index``."""
        if len(self.snapshots) < 3:
            raise WindowTooShortError(
                f"need 3 snapshots, trajectory has {len(self.snapshots)}"
            )
        if not (1 <= index <= len(self.snapshots) - 2):
            raise IndexError(f"window index {index} out of range")
        before, mid, after = self.snapshots[index - 1 : index + 2]
        dt1 = mid.s - before.s
        dt2 = after.s - mid.s
        if abs(dt1 - dt2) > 1e-9 * max(dt1, dt2):
            raise NonUniformWindowError(
                f"snapshot spacing not uniform: {dt1:.6g} vs {dt2:.6g}"
            )
        return TrajectoryWindow(before=before, mid=mid, after=after, dt=0.5 * (dt1 + dt2))


@dataclass(frozen=True)
class TrajectoryWindow:
    """Uniformly spaced snapshot triple for time-derivative estimates."""

    before: GraphState
    mid: GraphState
    after: GraphState
    dt: float


# ---------------------------------------------------------------------------
# stepping


def stable_dt(state: GraphState, cfl_safety: float = 0.25) -> float:
    """Parabolic stability surrogate: cfl * h^2 * min(e^{2u} / (2 n v^2)).

    The principal part of the flow operator scales like v^2 e^{-2u} per
    axis, so this is the classical explicit-Euler bound with the worst node
    deciding.  min(e^{2u}/v^2) equals min(e^{2u} * margin).
    """
    grid = state.grid
    _, _, _, margin = geometry.graph_speed_fields(
        state.u.values, grid, geometry.MARGIN_FLOOR
    )
    tightest = float(np.min(np.exp(2.0 * state.u.values) * margin))
    return cfl_safety * grid.spacing**2 * tightest / (2.0 * grid.dimension)


def _speed_or_abort(values, grid, floor, s):
    try:
        return geometry.graph_speed_fields(values, grid, floor)
    except NonSpacelikeError as exc:
        raise NonSpacelikeError(f"at s = {s:.6g}: {exc}", location=exc.location)


def step(state: GraphState, dt: float, config: FlowConfig):
    """One explicit step of size dt.  Returns (new state, diagnostics).

    The boundary condition must already be bound.  Every integrator stage
    sees boundary values imposed at its own stage time.
    """
    grid = state.grid
    u0 = state.u.values
    s = state.s
    bc = state.bc

    def staged(base, coeff, k, stage_s):
        vals = base + (coeff * dt) * k
        bc.apply(vals, stage_s, grid)
        return vals

    speed, v2, H, margin = _speed_or_abort(u0, grid, config.margin_floor, s)
    if config.integrator == "euler":
        unew = u0 + dt * speed
    elif config.integrator == "rk2":
        u1 = staged(u0, 0.5, speed, s + 0.5 * dt)
        k2, _, _, _ = _speed_or_abort(u1, grid, config.margin_floor, s + 0.5 * dt)
        unew = u0 + dt * k2
    else:  # rk4
        u1 = staged(u0, 0.5, speed, s + 0.5 * dt)
        k2, _, _, _ = _speed_or_abort(u1, grid, config.margin_floor, s + 0.5 * dt)
        u2 = staged(u0, 0.5, k2, s + 0.5 * dt)
        k3, _, _, _ = _speed_or_abort(u2, grid, config.margin_floor, s + 0.5 * dt)
        u3 = staged(u0, 1.0, k3, s + dt)
        k4, _, _, _ = _speed_or_abort(u3, grid, config.margin_floor, s + dt)
        unew = u0 + (dt / 6.0) * (speed + 2.0 * k2 + 2.0 * k3 + k4)

    s_new = s + dt
    bc.apply(unew, s_new, grid)
    peak = float(np.max(np.abs(unew)))
    if peak > config.blowup_cap:
        raise BlowupError(
            f"|u| reached {peak:.3g} (cap {config.blowup_cap:.3g}) at s = {s_new:.6g}"
        )

    interior = grid.interior_mask(1)
    H_int = H[interior]
    diag = StepDiagnostics(
        s=s_new,
        dt=dt,
        min_margin=float(np.min(margin)),
        max_v=float(np.sqrt(np.max(v2[interior]))),
        min_H=float(np.min(H_int)),
        max_H=float(np.max(H_int)),
        mean_convexity_violations=int(np.sum(H_int < -MEAN_CONVEXITY_TOL)),
    )
    new_state = GraphState(u=grids.Field(grid, unew), s=s_new, bc=bc)
    return new_state, diag


def run(state: GraphState, config: FlowConfig) -> Trajectory:
    """Advance to ``config.s_end``, recording snapshots every stride steps.

    On NonSpacelikeError or BlowupError the partial trajectory is returned
    with ``failure`` set instead of propagating, so a long run is never
    lost to its last step.
    """
    bc = state.bc.bound_to(state)
    current = GraphState(u=state.u.copy(), s=state.s, bc=bc)
    traj = Trajectory()
    traj.snapshots.append(current.copy())
    traj.dt_history.append(0.0)
    traj.diagnostics.append(None)

    steps = 0
    try:
        while current.s < config.s_end - 1e-14 * max(1.0, config.s_end):
            if steps >= config.max_steps:
                traj.failure = f"max_steps ({config.max_steps}) exceeded"
                break
            if config.dt_fixed is not None:
                dt = config.dt_fixed
            else:
                dt = min(stable_dt(current, config.cfl_safety), config.dt_max)
            dt = min(dt, config.s_end - current.s)
            current, diag = step(current, dt, config)
            steps += 1
            if steps % config.snapshot_stride == 0 or current.s >= config.s_end - 1e-14:
                traj.snapshots.append(current.copy())
                traj.dt_history.append(dt)
                traj.diagnostics.append(diag)
    except (NonSpacelikeError, BlowupError) as exc:
        traj.failure = str(exc)
    traj.steps = steps
    return traj


def evolve_window(state: GraphState, dt: float, config: FlowConfig) -> TrajectoryWindow:
    """Two fixed-size steps from ``state``, packaged for time-derivative checks."""
    bc = state.bc.bound_to(state)
    s0 = GraphState(u=state.u.copy(), s=state.s, bc=bc)
    s1, _ = step(s0, dt, config)
    s2, _ = step(s1, dt, config)
    return TrajectoryWindow(before=s0, mid=s1, after=s2, dt=dt)


# ---------------------------------------------------------------------------
# state-level isometry and diagnostics


def isometry_shift_state(state: GraphState, a: float) -> GraphState:
    """Apply the chart isometry (x, t) -> (e^a x, t - a) to a graph state.

    The new height field is u'(y) = u(e^{-a} y) - a on the same grid.  The
    flow is equivariant under this map at fixed s.  For a < 0 the pulled
    back points leave the grid hull and interpolation raises
    OutOfDomainError.
    """
    grid = state.grid
    shrink = np.exp(-a)
    if grid.mode == grids.RADIAL:
        pts = np.zeros((grid.resolution, grid.dimension))
        pts[:, 0] = shrink * grid.axis()
    else:
        mesh = grid.meshes()
        pts = np.stack([m.ravel() for m in mesh], axis=-1) * shrink
    try:
        pulled = grids.interpolate(state.u, pts)
    except OutOfDomainError as exc:
        raise OutOfDomainError(f"isometry shift a = {a:.6g}: {exc}") from exc
    values = np.asarray(pulled).reshape(grid.shape) - a
    bc = replace(state.bc, values=None)
    new_state = GraphState(u=grids.Field(grid, values), s=state.s, bc=bc)
    new_state.bc = bc.bound_to(new_state)
    return new_state


@dataclass(frozen=True)
class MeanConvexityReport:
    """Where (if anywhere) the mean curvature dips below -tolerance."""

    violation_count: int
    min_H: float
    tolerance: float
    locations: tuple


def mean_convexity_report(
    state: GraphState, tolerance: float = MEAN_CONVEXITY_TOL, max_locations: int = 8
) -> MeanConvexityReport:
    """Diagnostic scan for loss of mean convexity on interior nodes."""
    grid = state.grid
    _, _, H, _ = geometry.graph_speed_fields(state.u.values, grid, geometry.MARGIN_FLOOR)
    interior = grid.interior_mask(1)
    bad = (H < -tolerance) & interior
    count = int(np.sum(bad))
    locations = tuple(zip(*np.nonzero(bad)))[:max_locations]
    return MeanConvexityReport(
        violation_count=count,
        min_H=float(np.min(H[interior])),
        tolerance=tolerance,
        locations=locations,
    )
