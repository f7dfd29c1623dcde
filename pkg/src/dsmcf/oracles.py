"""Residual and inequality checks for discrete flow states.

Every check here compares a discretely measured quantity against a closed
form or a one-sided bound, and packages the outcome in a small report
object.  Time derivatives are always taken along the normal motion: the
graph solver advances u at fixed x, so the rate seen by a point moving
with the surface picks up an advection term::

    (d/ds) f  =  (f_after - f_before) / (2 dt)  +  H v e^{-2u} du . grad f

evaluated on the middle snapshot of a uniformly spaced window.  On a flat
slicing du = 0 and the two notions coincide.

The inequality checks use a grid tolerance of ``10 h^2 * scale`` with the
scale taken from the dominant term, unless the caller passes an explicit
tolerance.  Residual checks report the observed refinement order whenever
a matching refined input is supplied.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import flow, geometry, grids
from .errors import (
    BelowThresholdError,
    DegenerateResidualError,
    ModeUnsupportedError,
)

ORDER_WINDOW = (1.7, 2.3)
GRID_TOL_FACTOR = 10.0


@dataclass(frozen=True)
class ResidualReport:
    """Outcome of an identity check: how far the two sides disagree."""

    name: str
    linf: float
    l2: float
    count: int
    tolerance: float | None = None
    order: float | None = None
    passed: bool | None = None

    def summary(self) -> str:
        extra = "" if self.order is None else f", order {self.order:.2f}"
        return f"{self.name}: max |residual| {self.linf:.3e} over {self.count} nodes{extra}"

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "linf": self.linf,
            "l2": self.l2,
            "count": self.count,
            "tolerance": self.tolerance,
            "order": self.order,
            "passed": self.passed,
        }


@dataclass(frozen=True)
class InequalityReport:
    """Outcome of a one-sided bound: worst signed slack, negative = bad."""

    name: str
    worst_slack: float
    violations: int
    tolerance: float
    parameters: dict = field(default_factory=dict)
    passed: bool = True

    def summary(self) -> str:
        return (
            f"{self.name}: worst slack {self.worst_slack:.3e}, "
            f"{self.violations} violation(s) beyond {self.tolerance:.3e}"
        )

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "worst_slack": self.worst_slack,
            "violations": self.violations,
            "tolerance": self.tolerance,
            "parameters": dict(self.parameters),
            "passed": self.passed,
        }


# ---------------------------------------------------------------------------
# shared plumbing


def snapshot_geometry(state: flow.GraphState) -> geometry.GeometryFields:
    return geometry.GeometryFields(state.grid, state.u.values)


def _order_or_none(coarse_linf: float, fine_linf: float) -> float | None:
    try:
        return grids.refinement_order(coarse_linf, fine_linf)
    except DegenerateResidualError:
        return None


def _pass_flag(linf, tolerance, order):
    if tolerance is not None:
        return bool(linf <= tolerance)
    if order is not None:
        return bool(ORDER_WINDOW[0] <= order <= ORDER_WINDOW[1])
    return None


def _residual_report(name, residuals, mask, tolerance=None, order=None) -> ResidualReport:
    """Aggregate one or more residual arrays over a node mask."""
    parts = [np.abs(np.asarray(r)[..., mask]).reshape(-1) for r in residuals]
    flat = np.concatenate(parts)
    linf = float(np.max(flat))
    l2 = float(np.sqrt(np.mean(flat**2)))
    return ResidualReport(
        name=name,
        linf=linf,
        l2=l2,
        count=int(flat.size),
        tolerance=tolerance,
        order=order,
        passed=_pass_flag(linf, tolerance, order),
    )


def _check_refined_pair(coarse: grids.Grid, fine: grids.Grid) -> None:
    if fine.mode != coarse.mode or fine.dimension != coarse.dimension:
        raise ValueError("refined input must share mode and dimension")
    if abs(fine.spacing * 2.0 - coarse.spacing) > 1e-9 * coarse.spacing:
        raise ValueError(
            f"refined spacing {fine.spacing:.6g} is not half of {coarse.spacing:.6g}"
        )


def material_rate(
    window: flow.TrajectoryWindow,
    values_of,
    mid_geom: geometry.GeometryFields | None = None,
) -> tuple[np.ndarray, geometry.GeometryFields]:
    """Normal-motion time derivative of a per-snapshot field.

    ``values_of(geom)`` maps a snapshot geometry to a node array.  Returns
    the advected central difference on the middle snapshot together with
    that snapshot's geometry, so callers can reuse it.
    """
    geoms = [
        snapshot_geometry(window.before),
        mid_geom if mid_geom is not None else snapshot_geometry(window.mid),
        snapshot_geometry(window.after),
    ]
    f_before = values_of(geoms[0])
    f_mid = values_of(geoms[1])
    f_after = values_of(geoms[2])
    fixed_rate = (f_after - f_before) / (2.0 * window.dt)
    mid = geoms[1]
    grad_f = grids.field_gradient(f_mid, mid.grid)
    drift = mid.H * mid.v * mid.em2u * np.einsum("i...,i...->...", mid.du, grad_f)
    return fixed_rate + drift, mid


def _grid_tolerance(h: float, *term_arrays, mask=None) -> tuple[float, float]:
    """(tolerance, scale): 10 h^2 times the dominant masked magnitude."""
    scale = 1.0
    for arr in term_arrays:
        a = np.abs(np.asarray(arr))
        if mask is not None:
            a = a[mask]
        if a.size:
            scale = max(scale, float(np.max(a)))
    return GRID_TOL_FACTOR * h * h * scale, scale


def _inequality_report(name, slack, mask, tolerance, scale, parameters) -> InequalityReport:
    masked = np.asarray(slack)[mask]
    worst = float(np.min(masked))
    violations = int(np.count_nonzero(masked < -tolerance))
    params = dict(parameters)
    params["scale"] = scale
    return InequalityReport(
        name=name,
        worst_slack=worst,
        violations=violations,
        tolerance=tolerance,
        parameters=params,
        passed=violations == 0,
    )


# ---------------------------------------------------------------------------
# pointwise restriction identities


def restriction_gradient_residuals(fields: geometry.JetFields) -> dict:
    """Residual arrays of the three coordinate-gradient identities.

    The surface gradients of the restricted ambient coordinates have closed
    forms in the graph data: |grad t|^2 = v^2 - 1, |grad x_i|^2 matches the
    normal tilt g(nu, d_i), and the mixed product is e^{-2t} v g(d_i, nu).
    All three are algebraic in the jet, so these residuals probe rounding
    and assembly, not discretization.
    """
    gi = fields.gamma_inv
    du = fields.du
    idx = np.arange(fields.dimension)
    nu_inner = fields.v * du  # g(nu, d_i)
    height = np.einsum("i...,ij...,j...->...", du, gi, du) - (fields.v2 - 1.0)
    coord = gi[idx, idx] - (fields.em2u + fields.em2u**2 * nu_inner**2)
    mixed = np.einsum("ij...,j...->i...", gi, du) - fields.em2u * fields.v * nu_inner
    return {"height": height, "coordinate": coord, "mixed": mixed}


def check_restriction_gradients(
    state: flow.GraphState, tolerance: float = 1e-10
) -> ResidualReport:
    fields = snapshot_geometry(state)
    res = restriction_gradient_residuals(fields)
    mask = np.ones(state.grid.shape, dtype=bool)
    return _residual_report(
        "restriction-gradients", list(res.values()), mask, tolerance=tolerance
    )


# ---------------------------------------------------------------------------
# coordinate Laplacians, both assembly routes


def _coordinate_laplacian_residuals(geom: geometry.GeometryFields):
    """(closed-form residuals, wave-route residuals) for one state."""
    grid = geom.grid
    n = grid.dimension
    lap_t = geom.laplacian(geom.u)
    nu_inner = geom.v * geom.du
    closed_x, closed_t = geometry.coordinate_laplacian_values(
        geom.H, geom.v, geom.u, nu_inner, dimension=n
    )
    nu_sp = geom.v * geom.em2u * geom.du
    wave_x = geom.H * nu_sp - 2.0 * nu_sp * geom.v
    wave_t = (
        -float(n)
        + geom.H * geom.v
        - geom.e2u * np.einsum("i...,i...->...", nu_sp, nu_sp)
    )
    closed = [lap_t - closed_t]
    wave = [lap_t - wave_t]
    if grid.mode == grids.CARTESIAN:
        meshes = grid.meshes()
        for i in range(n):
            lap_x = geom.laplacian(meshes[i])
            closed.append(lap_x - closed_x[i])
            wave.append(lap_x - wave_x[i])
    return closed, wave


def check_coordinate_laplacians(
    state: flow.GraphState,
    fine_state: flow.GraphState | None = None,
    tolerance: float | None = None,
) -> list[ResidualReport]:
    """Discrete surface Laplacian of the coordinate restrictions vs closed
    forms, assembled both directly and through the ambient wave operator.

    Radial grids can only represent rotationally symmetric fields, so they
    check the height coordinate; Cartesian grids check all of them.  With
    ``fine_state`` (same surface at half the spacing) the observed
    refinement order is reported per route.
    """
    geom = snapshot_geometry(state)
    closed, wave = _coordinate_laplacian_residuals(geom)
    mask = grids.laplacian_mask(state.grid)

    orders = (None, None)
    if fine_state is not None:
        _check_refined_pair(state.grid, fine_state.grid)
        fine_geom = snapshot_geometry(fine_state)
        f_closed, f_wave = _coordinate_laplacian_residuals(fine_geom)
        f_mask = grids.laplacian_mask(fine_state.grid)
        coarse = [_residual_report("c", closed, mask), _residual_report("c", wave, mask)]
        fine = [
            _residual_report("f", f_closed, f_mask),
            _residual_report("f", f_wave, f_mask),
        ]
        orders = tuple(
            _order_or_none(c.linf, f.linf) for c, f in zip(coarse, fine)
        )

    return [
        _residual_report(
            "coordinate-laplacians", closed, mask, tolerance=tolerance, order=orders[0]
        ),
        _residual_report(
            "coordinate-laplacians-wave-route",
            wave,
            mask,
            tolerance=tolerance,
            order=orders[1],
        ),
    ]


# ---------------------------------------------------------------------------
# gradient of the tilt factor


def tilt_gradient_residuals(fields: geometry.JetFields, dv_covector) -> tuple:
    """(vector residual gamma-norm, scalar residual) for the tilt gradient.

    The gradient of v is v P - W(P) with P the tangential part of d_t and
    W the shape operator, and its squared norm expands into
    v^2 (v^2 - 1) - 2 v A(P, P) + |W(P)|^2.  ``dv_covector`` supplies
    d_i v, either analytic (exact) or from finite differences (O(h^2)).
    """
    dv = np.asarray(dv_covector, dtype=float)
    grad_vec = np.einsum("ij...,j...->i...", fields.gamma_inv, dv)
    target = fields.v * fields.tilt_tangent - fields.sheared_tilt
    vec_residual = np.sqrt(
        np.maximum(fields.gamma_norm_sq(grad_vec - target), 0.0)
    )
    tilt = fields.tilt_tangent
    a_pp = np.einsum("i...,ij...,j...->...", tilt, fields.hmat, tilt)
    closed_norm = (
        fields.v2 * (fields.v2 - 1.0)
        - 2.0 * fields.v * a_pp
        + fields.gamma_norm_sq(fields.sheared_tilt)
    )
    scalar_residual = fields.gamma_inv_norm_sq(dv) - closed_norm
    return vec_residual, scalar_residual


def _tilt_gradient_state(geom: geometry.GeometryFields):
    dv = grids.field_gradient(geom.v, geom.grid)
    return tilt_gradient_residuals(geom, dv)


def check_tilt_gradient(
    state: flow.GraphState,
    fine_state: flow.GraphState | None = None,
    tolerance: float | None = None,
) -> ResidualReport:
    """Finite-difference gradient of v against its closed form."""
    geom = snapshot_geometry(state)
    residuals = _tilt_gradient_state(geom)
    mask = state.grid.interior_mask()

    order = None
    if fine_state is not None:
        _check_refined_pair(state.grid, fine_state.grid)
        fine_geom = snapshot_geometry(fine_state)
        fine_res = _tilt_gradient_state(fine_geom)
        coarse_linf = _residual_report("c", residuals, mask).linf
        fine_linf = _residual_report(
            "f", fine_res, fine_state.grid.interior_mask()
        ).linf
        order = _order_or_none(coarse_linf, fine_linf)

    return _residual_report(
        "tilt-gradient", residuals, mask, tolerance=tolerance, order=order
    )


# ---------------------------------------------------------------------------
# evolution of the squared tilt factor


def _tilt_evolution_parts(window: flow.TrajectoryWindow):
    """(mid geometry, mask, measured lhs, identity rhs, |grad v|^2)."""
    rate, mid = material_rate(window, lambda g: g.v2)
    lhs = rate - mid.laplacian(mid.v2)
    dv = grids.field_gradient(mid.v, mid.grid)
    grad_v_sq = mid.gamma_inv_norm_sq(dv)
    shear_sq = mid.gamma_norm_sq(mid.sheared_tilt)
    rhs = (
        4.0 * mid.H * mid.v
        - 2.0 * mid.v2**2
        - 4.0 * mid.v2
        - 2.0 * mid.a2 * mid.v2
        + 2.0 * shear_sq
        - 4.0 * grad_v_sq
    )
    mask = grids.laplacian_mask(mid.grid)
    return mid, mask, lhs, rhs, grad_v_sq


def check_tilt_evolution(
    window: flow.TrajectoryWindow,
    fine_window: flow.TrajectoryWindow | None = None,
    tolerance: float | None = None,
) -> ResidualReport:
    """Measured (d/ds - Lap) v^2 against its closed-form evolution."""
    mid, mask, lhs, rhs, _ = _tilt_evolution_parts(window)
    order = None
    if fine_window is not None:
        _check_refined_pair(window.mid.grid, fine_window.mid.grid)
        _, f_mask, f_lhs, f_rhs, _ = _tilt_evolution_parts(fine_window)
        coarse_linf = _residual_report("c", [lhs - rhs], mask).linf
        fine_linf = _residual_report("f", [f_lhs - f_rhs], f_mask).linf
        order = _order_or_none(coarse_linf, fine_linf)
    return _residual_report(
        "tilt-evolution", [lhs - rhs], mask, tolerance=tolerance, order=order
    )


def check_tilt_bounds(
    window: flow.TrajectoryWindow,
    delta: float,
    tolerance: float | None = None,
) -> list[InequalityReport]:
    """One-sided bounds on the measured v^2 evolution, plus the pointwise
    pinching bound |A|^2 >= (4/3) lambda_1^2 - H^2.

    ``delta`` steers the dissipation bound and must lie in [0, 1/3].
    Returns one report per bound.
    """
    if not (0.0 <= delta <= 1.0 / 3.0 + 1e-15):
        raise ValueError(f"delta must lie in [0, 1/3], got {delta}")
    mid, mask, lhs, _, grad_v_sq = _tilt_evolution_parts(window)
    h = mid.grid.spacing
    common = {"delta": delta, "h": h, "dt": window.dt}

    dissipation = (
        -(4.0 + delta) * grad_v_sq
        - 2.0 * (1.0 - delta) * mid.v2**2
        + 2.0 * mid.H**2 * mid.v2
        + 4.0 * mid.H * mid.v
    )
    tol_a, scale_a = (
        (tolerance, None)
        if tolerance is not None
        else _grid_tolerance(h, dissipation, lhs, mask=mask)
    )
    reports = [
        _inequality_report(
            "tilt-dissipation-bound", dissipation - lhs, mask, tol_a, scale_a, common
        )
    ]

    decay = -4.0 * grad_v_sq - 2.0 * (mid.v2 - 1.0)
    tol_b, scale_b = (
        (tolerance, None)
        if tolerance is not None
        else _grid_tolerance(h, decay, lhs, mask=mask)
    )
    reports.append(
        _inequality_report("tilt-decay-bound", decay - lhs, mask, tol_b, scale_b, common)
    )

    lam1 = mid.extremal_curvature()
    pinching = mid.a2 + mid.H**2 - (4.0 / 3.0) * lam1**2
    tol_c = tolerance if tolerance is not None else 1e-10 * max(
        1.0, float(np.max(np.abs(mid.a2[mask])))
    )
    reports.append(
        _inequality_report("pinching-bound", pinching, mask, tol_c, None, common)
    )
    return reports


# ---------------------------------------------------------------------------
# localization weight bounds


def _weight_fields(geom: geometry.GeometryFields, spec: geometry.CutoffSpec):
    if float(np.min(geom.u)) < spec.t_min:
        raise BelowThresholdError(
            f"height {float(np.min(geom.u)):.6g} below threshold {spec.t_min:.6g}"
        )
    return geom.grid.radius_squared() * np.exp(spec.alpha * geom.u)


def check_weight_evolution(
    window: flow.TrajectoryWindow,
    spec: geometry.CutoffSpec,
    tolerance: float | None = None,
) -> InequalityReport:
    """Measured (d/ds - Lap) of the weight e^{alpha t} |x|^2 against its
    guaranteed lower bound (-alpha^2 r - epsilon) v^2.

    The bound only holds above the height threshold; a window below it
    raises BelowThresholdError.  Negative controls (steep alpha at low
    heights) are expected to report violations rather than raise.
    """
    rate, mid = material_rate(window, lambda g: _weight_fields(g, spec))
    r = _weight_fields(mid, spec)
    lhs = rate - mid.laplacian(r)
    _, _, _, evol_lower = geometry.cutoff_arrays(
        mid.u, mid.grid.radius_squared(), mid.v, spec
    )
    mask = grids.laplacian_mask(mid.grid)
    h = mid.grid.spacing
    if tolerance is not None:
        tol, scale = tolerance, None
    else:
        tol, scale = _grid_tolerance(h, evol_lower, lhs, mask=mask)
    params = {
        "alpha": spec.alpha,
        "epsilon": spec.epsilon,
        "t_min": spec.t_min,
        "h": h,
        "dt": window.dt,
    }
    return _inequality_report(
        "weight-evolution-bound", lhs - evol_lower, mask, tol, scale, params
    )


def check_weight_gradient(
    state: flow.GraphState,
    spec: geometry.CutoffSpec,
    tolerance: float | None = None,
) -> InequalityReport:
    """Two-sided bound on |grad r|^2 for the localization weight."""
    geom = snapshot_geometry(state)
    r = _weight_fields(geom, spec)
    grad_r = grids.field_gradient(r, geom.grid)
    grad_sq = geom.gamma_inv_norm_sq(grad_r)
    _, lower, upper, _ = geometry.cutoff_arrays(
        geom.u, geom.grid.radius_squared(), geom.v, spec
    )
    slack = np.minimum(grad_sq - lower, upper - grad_sq)
    mask = geom.grid.interior_mask()
    h = geom.grid.spacing
    if tolerance is not None:
        tol, scale = tolerance, None
    else:
        tol, scale = _grid_tolerance(h, lower, upper, grad_sq, mask=mask)
    params = {
        "alpha": spec.alpha,
        "epsilon": spec.epsilon,
        "t_min": spec.t_min,
        "h": h,
    }
    return _inequality_report("weight-gradient-bounds", slack, mask, tol, scale, params)


# ---------------------------------------------------------------------------
# curvature evolution on radial grids


def radial_curvatures(geom: geometry.GeometryFields) -> tuple[np.ndarray, np.ndarray]:
    """(radial, angular) principal curvatures of a rotationally symmetric
    graph, with the L'Hopital limit on the axis."""
    if geom.grid.mode != grids.RADIAL:
        raise ModeUnsupportedError("principal curvature profiles need a radial grid")
    kappa_r = (
        geom.v
        * (geom.u_rhorho + geom.e2u - 2.0 * geom.u_rho**2)
        / (geom.e2u - geom.u_rho**2)
    )
    kappa_a = geom.v * (geom.slope_over_rho + geom.e2u) * geom.em2u
    return kappa_r, kappa_a


def _curvature_norm_sq(geom: geometry.GeometryFields) -> np.ndarray:
    kr, ka = radial_curvatures(geom)
    return kr**2 + (geom.dimension - 1.0) * ka**2


def _curvature_gradient_sq(geom: geometry.GeometryFields) -> np.ndarray:
    """|grad A|^2 of a rotationally symmetric surface from its curvature
    profiles: radial arclength derivatives plus the orbit-warping term."""
    kr, ka = radial_curvatures(geom)
    grid = geom.grid
    n = geom.dimension
    arc = geom.v * np.exp(-geom.u)  # d/d(arclength) = arc * d/d(rho)
    kr_s = arc * grids.radial_first_derivative(kr, grid.spacing)
    ka_s = arc * grids.radial_first_derivative(ka, grid.spacing)
    rho = grid.axis()
    warp = np.zeros_like(kr)
    warp[1:] = arc[1:] * (geom.u_rho[1:] + 1.0 / rho[1:]) * (kr[1:] - ka[1:])
    return kr_s**2 + (n - 1.0) * ka_s**2 + 2.0 * (n - 1.0) * warp**2


def check_curvature_evolution(
    window: flow.TrajectoryWindow,
    fine_window: flow.TrajectoryWindow | None = None,
    tolerance: float | None = None,
) -> tuple[ResidualReport, InequalityReport]:
    """Measured evolution of |A|^2 on a radial surface, plus the one-sided
    bound on its traceless part.

    The identity checked is

        (d/ds - lap) |A|^2 = -2 |grad A|^2 + 4 H^2 - 2 |A|^2 (3 + |A|^2),

    whose right side vanishes on the flat slicing (0 + 36 - 36).  The
    coefficients are specific to three ambient spatial dimensions, and
    |grad A|^2 is only assembled from rotationally symmetric profiles, so
    Cartesian grids and other dimensions raise ModeUnsupportedError.

    The traceless part Z = |A|^2 - H^2/3 is tested against the one-sided
    bound (d/ds - lap) Z <= 18 Z - (2/3) H^2 Z.  The measured drift is
    considerably more negative (the identity above gives -6 Z - 2 |A|^2 Z
    plus gradient terms), so the slack stays comfortably positive on
    smooth runs; the looser bound is kept because it is the one the
    downstream flatness estimates consume.
    """
    grid = window.mid.grid
    if grid.mode != grids.RADIAL:
        raise ModeUnsupportedError(
            "curvature evolution is only measurable on radial grids"
        )
    if grid.dimension != 3:
        raise ModeUnsupportedError(
            f"curvature evolution coefficients assume dimension 3, got {grid.dimension}"
        )

    def parts(win):
        rate, mid = material_rate(win, _curvature_norm_sq)
        a2 = _curvature_norm_sq(mid)
        lhs = rate - mid.laplacian(a2)
        rhs = (
            -2.0 * _curvature_gradient_sq(mid)
            + 4.0 * mid.H**2
            - 2.0 * a2 * (3.0 + a2)
        )
        return mid, lhs - rhs

    def collar_mask(g):
        # Curvature fields sit two derivatives deep in u, so the boundary
        # node's one-sided values (and whatever the boundary condition
        # pinned there) reach two nodes further in than for first-order
        # fields, with 1/h^2 amplification.  Masking a three-node collar
        # keeps the report about the resolved interior.
        mask = grids.laplacian_mask(g)
        mask[-3:] = False
        return mask

    mid, residual = parts(window)
    mask = collar_mask(grid)
    order = None
    if fine_window is not None:
        _check_refined_pair(grid, fine_window.mid.grid)
        _, fine_residual = parts(fine_window)
        coarse_linf = _residual_report("c", [residual], mask).linf
        fine_linf = _residual_report(
            "f", [fine_residual], collar_mask(fine_window.mid.grid)
        ).linf
        order = _order_or_none(coarse_linf, fine_linf)
    identity = _residual_report(
        "curvature-evolution", [residual], mask, tolerance=tolerance, order=order
    )

    def traceless_of(g):
        return _curvature_norm_sq(g) - g.H**2 / 3.0

    rate_z, _ = material_rate(window, traceless_of, mid_geom=mid)
    z = traceless_of(mid)
    lhs_z = rate_z - mid.laplacian(z)
    bound = 18.0 * z - (2.0 / 3.0) * mid.H**2 * z
    h = grid.spacing
    if tolerance is not None:
        tol, scale = tolerance, None
    else:
        tol, scale = _grid_tolerance(h, bound, lhs_z, mask=mask)
    traceless = _inequality_report(
        "traceless-curvature-bound",
        bound - lhs_z,
        mask,
        tol,
        scale,
        {"h": h, "dt": window.dt},
    )
    return identity, traceless
