"""Pointwise geometry of spacelike graphs in an expanding flat chart.

The ambient space is ``R^n x R`` with the Lorentzian metric

    g = e^{2t} (dx_1^2 + ... + dx_n^2) - dt^2,

an exponentially expanding flat slicing with unit Hubble rate.  Every level
set {t = const} is intrinsically flat and umbilic with mean curvature n
towards the future.  The covariant derivatives of the coordinate fields are

    D_i d_j = delta_ij e^{2t} d_t,    D_i d_t = D_t d_i = d_i,    D_t d_t = 0,

equivalently ``D_X d_t = X + g(X, d_t) d_t`` for any X.  From that table the
geometry of a spacelike graph t = u(x) with jet (u, du, d2u) follows:

    margin        m        = 1 - e^{-2u} |du|^2        (spacelike iff m > 0)
    tilt          v        = m^{-1/2} = -g(d_t, nu) >= 1
    metric        gamma_ij = e^{2u} delta_ij - u_i u_j
    unit normal   nu       = v (e^{-2u} u_i d_i + d_t)   (future pointing)
    tangents      e_i      = d_i + u_i d_t
    D_{e_i} e_j = (u_ij + delta_ij e^{2u}) d_t + u_j d_i + u_i d_j
    second form   h_ij     = -g(D_{e_i} e_j, nu)
                           = v (u_ij + e^{2u} delta_ij - 2 u_i u_j)
    H = gamma^{ij} h_ij,   |A|^2 = tr((gamma^{-1} h)^2).

The closed forms for gamma^{-1} and the mean curvature used below are

    gamma^{ij} = e^{-2u} (delta_ij + v^2 e^{-2u} u_i u_j)
    H / v      = e^{-2u} (tr d2u + v^2 e^{-2u} du.d2u.du) + (n + 1) - v^2,

both consequences of the rank-one structure of gamma.  The derivation of
h_ij from the covariant-derivative table is verified symbolically in
tests/test_geometry.py, so the formulas here can be trusted as frozen.

Sign conventions: the normal is future pointing (positive d_t component),
and with the h_ij above a flat slice u = const has H = +n, so the flow
built on this module expands towards the future.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg

from . import grids
from .errors import (
    BelowThresholdError,
    NonSpacelikeError,
    SingularMetricError,
)

DEFAULT_DIMENSION = 3

#: Jets whose spacelike margin falls at or below this floor are rejected
#: rather than clamped; silently clamping would hide causality violations.
MARGIN_FLOOR = 1e-10


# ---------------------------------------------------------------------------
# ambient space


@dataclass(frozen=True)
class AmbientPoint:
    """A point (x, t) of the ambient expanding chart."""

    x: np.ndarray
    t: float

    def __post_init__(self):
        object.__setattr__(self, "x", np.atleast_1d(np.asarray(self.x, dtype=float)))

    @property
    def dimension(self) -> int:
        return self.x.shape[0]


def ambient_metric(t: float, dimension: int = DEFAULT_DIMENSION) -> np.ndarray:
    """Metric matrix diag(e^{2t}, ..., e^{2t}, -1) in coordinates (x, t)."""
    diag = np.full(dimension + 1, math.exp(2.0 * t))
    diag[-1] = -1.0
    return np.diag(diag)


def ambient_inner(X: np.ndarray, Y: np.ndarray, t, dimension: int = DEFAULT_DIMENSION):
    """g(X, Y) at height t for (n+1)-component vectors (spatial first, t last)."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    spatial = np.sum(X[..., :dimension] * Y[..., :dimension], axis=-1)
    return np.exp(2.0 * np.asarray(t)) * spatial - X[..., -1] * Y[..., -1]


def isometry_shift_point(point: AmbientPoint, a: float) -> AmbientPoint:
    """The boost (x, t) -> (e^a x, t - a), an isometry of the chart."""
    return AmbientPoint(x=math.exp(a) * point.x, t=point.t - a)


# ---------------------------------------------------------------------------
# graph jets


@dataclass(frozen=True)
class GraphSample:
    """Second-order jet (u, du, d2u) of a height function at one point."""

    u: float
    du: np.ndarray
    d2u: np.ndarray
    x: np.ndarray | None = None

    def __post_init__(self):
        du = np.atleast_1d(np.asarray(self.du, dtype=float))
        d2u = np.asarray(self.d2u, dtype=float)
        object.__setattr__(self, "du", du)
        object.__setattr__(self, "d2u", d2u)
        if self.x is not None:
            object.__setattr__(
                self, "x", np.atleast_1d(np.asarray(self.x, dtype=float))
            )
        n = du.shape[0]
        if d2u.shape != (n, n):
            raise ValueError(f"d2u must be {n}x{n}, got {d2u.shape}")
        scale = max(1.0, float(np.max(np.abs(d2u))))
        if np.max(np.abs(d2u - d2u.T)) > 1e-12 * scale:
            raise ValueError("d2u must be symmetric")
        m = spacelike_margin(self.u, du)
        if m <= MARGIN_FLOOR:
            raise NonSpacelikeError(
                f"jet has margin {m:.3e} <= {MARGIN_FLOOR:.0e}; "
                "the graph is not spacelike here"
            )

    @property
    def dimension(self) -> int:
        return self.du.shape[0]


def spacelike_margin(u, du):
    """m = 1 - e^{-2u} |du|^2, positive exactly on spacelike jets."""
    du = np.asarray(du, dtype=float)
    return 1.0 - np.exp(-2.0 * np.asarray(u)) * np.sum(du * du, axis=0)


def jet_after_isometry(sample: GraphSample, a: float) -> GraphSample:
    """Jet of the shifted graph u'(y) = u(e^{-a} y) - a at y = e^a x."""
    x = None if sample.x is None else math.exp(a) * sample.x
    return GraphSample(
        u=sample.u - a,
        du=math.exp(-a) * sample.du,
        d2u=math.exp(-2.0 * a) * sample.d2u,
        x=x,
    )


# ---------------------------------------------------------------------------
# surface geometry at a point


@dataclass(frozen=True)
class SurfaceGeometry:
    """Induced geometry of a spacelike graph at one point.

    ``nu`` has n+1 components in the (d_i, d_t) coordinate basis with the
    t-component last and positive.  ``h`` is the second fundamental form in
    the coordinate tangent basis e_i = d_i + u_i d_t.  ``lambda1`` is the
    principal curvature of largest magnitude, sign kept.
    """

    gamma: np.ndarray
    nu: np.ndarray
    v: float
    h: np.ndarray
    H: float
    a2: float
    a2_traceless: float
    lambda1: float
    margin: float
    sample: GraphSample


def shape_operator_eigenvalues(gamma: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Eigenvalues of gamma^{-1} h, ascending along the last axis.

    Works on batches: gamma and h may be (..., n, n).  The eigenvalues are
    real because gamma is positive definite; they are computed from the
    congruent symmetric matrix L^{-1} h L^{-T} with gamma = L L^T.
    """
    gamma = np.asarray(gamma, dtype=float)
    h = np.asarray(h, dtype=float)
    try:
        L = np.linalg.cholesky(gamma)
        Linv = np.linalg.inv(L)
    except np.linalg.LinAlgError as exc:
        raise SingularMetricError(
            f"induced metric could not be factored: {exc}"
        ) from exc
    W = np.einsum("...ab,...bc,...dc->...ad", Linv, h, Linv)
    return np.linalg.eigvalsh(W)


def surface_geometry(
    sample: GraphSample, margin_floor: float = MARGIN_FLOOR
) -> SurfaceGeometry:
    """Full induced geometry of the graph jet ``sample``."""
    n = sample.dimension
    u, du, d2u = sample.u, sample.du, sample.d2u
    e2u = math.exp(2.0 * u)
    em2u = 1.0 / e2u
    m = float(spacelike_margin(u, du))
    if m <= margin_floor:
        raise NonSpacelikeError(f"margin {m:.3e} at or below floor {margin_floor:.0e}")
    v = 1.0 / math.sqrt(m)

    outer = np.outer(du, du)
    gamma = e2u * np.eye(n) - outer
    nu = np.empty(n + 1)
    nu[:n] = v * em2u * du
    nu[-1] = v
    h = v * (d2u + e2u * np.eye(n) - 2.0 * outer)

    gamma_inv = em2u * (np.eye(n) + (v * v * em2u) * outer)
    S = gamma_inv @ h
    H = float(np.trace(S))
    a2 = float(np.einsum("ij,ji->", S, S))
    lam = shape_operator_eigenvalues(gamma, h)
    # extremal principal curvature by magnitude, sign kept
    lam1 = lam[-1] if abs(lam[-1]) >= abs(lam[0]) else lam[0]
    return SurfaceGeometry(
        gamma=gamma,
        nu=nu,
        v=v,
        h=h,
        H=H,
        a2=a2,
        a2_traceless=a2 - H * H / n,
        lambda1=float(lam1),
        margin=m,
        sample=sample,
    )


def tangential_projection(X: np.ndarray, geom: SurfaceGeometry) -> np.ndarray:
    """Project an ambient vector onto the tangent space: X + g(X, nu) nu."""
    X = np.asarray(X, dtype=float)
    n = geom.sample.dimension
    inner = ambient_inner(X, geom.nu, geom.sample.u, dimension=n)
    return X + inner * geom.nu


def tangent_components(X: np.ndarray, geom: SurfaceGeometry) -> np.ndarray:
    """Components of a tangent vector in the basis e_i = d_i + u_i d_t.

    For a tangent vector the spatial components already are the e_i
    components; this simply strips the t slot (which must be consistent).
    """
    X = np.asarray(X, dtype=float)
    return X[:-1].copy()


# ---------------------------------------------------------------------------
# restriction identities in closed form


def coordinate_laplacian_values(H, v, t, nu_inner, dimension: int = DEFAULT_DIMENSION):
    """Surface Laplacians of the restricted coordinates, in closed form.

    ``nu_inner`` holds g(nu, d_i) per spatial axis.  Returns (Lap x_i array,
    Lap t).  The t-Laplacian is -n + H v - (v^2 - 1); the constant -n is the
    ambient wave operator of t.
    """
    em2t = np.exp(-2.0 * np.asarray(t, dtype=float))
    nu_inner = np.asarray(nu_inner, dtype=float)
    lap_x = H * em2t * nu_inner - 2.0 * em2t * v * nu_inner
    lap_t = -float(dimension) + H * v - (v * v - 1.0)
    return lap_x, lap_t


def coordinate_laplacians_closed_form(geom: SurfaceGeometry):
    """(Lap x_i per axis, Lap t) for the graph at ``geom``'s base point."""
    n = geom.sample.dimension
    u = geom.sample.u
    nu_inner = math.exp(2.0 * u) * geom.nu[:n]
    return coordinate_laplacian_values(geom.H, geom.v, u, nu_inner, dimension=n)


def coordinate_laplacians_wave_route(geom: SurfaceGeometry):
    """Same Laplacians assembled from the ambient wave-operator identity.

    Lap f = Box f + H nu(f) + Hess f(nu, nu) for the restriction of an
    ambient function f.  For the coordinates: Box x_i = 0, Box t = -n,
    Hess x_i has the single pair of entries (d_i, d_t) = -1, and
    Hess t(d_i, d_i) = -e^{2t}.  Algebraically identical to the closed
    forms, but assembled through an independent code path.
    """
    n = geom.sample.dimension
    nu_sp = geom.nu[:n]
    nu_t = geom.nu[-1]
    e2u = math.exp(2.0 * geom.sample.u)
    lap_x = geom.H * nu_sp - 2.0 * nu_sp * nu_t
    lap_t = -float(n) + geom.H * nu_t - e2u * float(np.sum(nu_sp * nu_sp))
    return lap_x, lap_t


# ---------------------------------------------------------------------------
# localization weight r = e^{alpha t} |x|^2


@dataclass(frozen=True)
class CutoffSpec:
    """Parameters of the localization weight r = e^{alpha t} |x|^2.

    ``radius`` bounds the region {r <= radius}; ``epsilon`` is the slack the
    height threshold ``t_min`` buys in the bounds below.
    """

    alpha: float
    radius: float
    epsilon: float
    t_min: float

    def __post_init__(self):
        if not (0.0 < self.alpha < 2.0):
            raise ValueError(f"alpha must lie in (0, 2), got {self.alpha}")
        if not (self.radius > 0.0):
            raise ValueError("radius must be positive")
        if not (self.epsilon > 0.0):
            raise ValueError("epsilon must be positive")


@dataclass(frozen=True)
class CutoffBounds:
    """Value and guaranteed bounds for the weight at one point."""

    value: float
    in_region: bool
    grad_sq_lower: float
    grad_sq_upper: float
    evolution_lower: float


def cutoff_arrays(t, radius_sq, v, spec: CutoffSpec):
    """Vectorized weight value and bounds; see ``cutoff_value_and_bounds``."""
    t = np.asarray(t, dtype=float)
    r = np.exp(spec.alpha * t) * np.asarray(radius_sq, dtype=float)
    v2 = np.asarray(v, dtype=float) ** 2
    a2r = spec.alpha**2 * r
    grad_lower = a2r * (1.0 - spec.epsilon) * r * (v2 - 1.0) - spec.epsilon * r * v2
    grad_upper = 2.0 * a2r * r * (v2 - 1.0) + spec.epsilon * r * v2
    evol_lower = (-a2r - spec.epsilon) * v2
    return r, grad_lower, grad_upper, evol_lower


def cutoff_value_and_bounds(
    point: AmbientPoint, spec: CutoffSpec, geom: SurfaceGeometry
) -> CutoffBounds:
    """Weight value at ``point`` plus its gradient and evolution bounds.

    The bounds only hold above the height threshold; asking below it raises
    BelowThresholdError instead of returning vacuous numbers.
    """
    if point.t < spec.t_min:
        raise BelowThresholdError(
            f"t = {point.t:.6g} below the threshold t_min = {spec.t_min:.6g}"
        )
    r2 = float(np.sum(point.x**2))
    r, glo, gup, elo = cutoff_arrays(point.t, r2, geom.v, spec)
    return CutoffBounds(
        value=float(r),
        in_region=bool(r <= spec.radius),
        grad_sq_lower=float(glo),
        grad_sq_upper=float(gup),
        evolution_lower=float(elo),
    )


# ---------------------------------------------------------------------------
# vectorized geometry over jet batches and grids


class JetFields:
    """Geometry quantities over a batch of jets, computed lazily.

    Index convention: tensor axes lead, so du is (n, ...) and d2u is
    (n, n, ...) over an arbitrary batch shape.  Everything heavier than the
    core scalars (v, H, margin) is a cached property, so cheap consumers
    stay cheap.
    """

    def __init__(self, u, du, d2u, margin_floor: float = MARGIN_FLOOR, where=None):
        self.u = np.asarray(u, dtype=float)
        self.du = np.asarray(du, dtype=float)
        self.d2u = np.asarray(d2u, dtype=float)
        self.dimension = self.du.shape[0]
        self.margin_floor = margin_floor

        self.e2u = np.exp(2.0 * self.u)
        self.em2u = np.exp(-2.0 * self.u)
        self.grad_sq = np.einsum("i...,i...->...", self.du, self.du)
        self.margin = 1.0 - self.em2u * self.grad_sq
        worst = float(np.min(self.margin))
        if worst <= margin_floor:
            raise NonSpacelikeError(
                f"margin {worst:.3e} at or below floor {margin_floor:.0e}"
                + (f" ({where})" if where else ""),
                location=self._worst_location(),
            )
        self.v2 = 1.0 / self.margin
        self.v = np.sqrt(self.v2)
        n = self.dimension
        trace = np.einsum("ii...->...", self.d2u)
        quad = np.einsum("i...,ij...,j...->...", self.du, self.d2u, self.du)
        #: H / v, which is also the vertical speed of the graph flow.
        self.speed = (
            self.em2u * (trace + self.v2 * self.em2u * quad) + (n + 1.0) - self.v2
        )
        self.H = self.v * self.speed

    def _worst_location(self):
        flat = np.argmin(self.margin)
        if self.margin.ndim == 0:
            return None
        return np.unravel_index(flat, self.margin.shape)

    @cached_property
    def outer(self):
        return np.einsum("i...,j...->ij...", self.du, self.du)

    @cached_property
    def gamma(self):
        n = self.dimension
        g = -self.outer.copy()
        idx = np.arange(n)
        g[idx, idx] += self.e2u
        return g

    @cached_property
    def gamma_inv(self):
        n = self.dimension
        g = (self.v2 * self.em2u) * self.outer
        idx = np.arange(n)
        g[idx, idx] += 1.0
        return self.em2u * g

    @cached_property
    def hmat(self):
        n = self.dimension
        h = self.d2u - 2.0 * self.outer
        idx = np.arange(n)
        h = h.copy()
        h[idx, idx] += self.e2u
        return self.v * h

    @cached_property
    def shape_op(self):
        return np.einsum("ik...,kj...->ij...", self.gamma_inv, self.hmat)

    @cached_property
    def a2(self):
        return np.einsum("ij...,ji...->...", self.shape_op, self.shape_op)

    @cached_property
    def a2_traceless(self):
        return self.a2 - self.H**2 / self.dimension

    @cached_property
    def weight(self):
        """sqrt(det gamma) = e^{n u} / v, the volume density over dx."""
        return np.exp(self.dimension * self.u) / self.v

    @cached_property
    def tilt_tangent(self):
        """e_i components of the tangential part of d_t (equals -grad t)."""
        return -(self.v2 * self.em2u) * self.du

    @cached_property
    def sheared_tilt(self):
        """Shape operator applied to the tangential part of d_t."""
        return np.einsum("ij...,j...->i...", self.shape_op, self.tilt_tangent)

    @cached_property
    def dv(self):
        """Spatial derivative of v implied by the jet (chain rule on m)."""
        dm = 2.0 * self.em2u * (
            self.du * self.grad_sq
            - np.einsum("ij...,j...->i...", self.d2u, self.du)
        )
        return -0.5 * self.v**3 * dm

    def eigenvalues(self):
        """Shape-operator eigenvalues, ascending along the last axis."""
        gam = np.moveaxis(self.gamma, (0, 1), (-2, -1))
        h = np.moveaxis(self.hmat, (0, 1), (-2, -1))
        return shape_operator_eigenvalues(gam, h)

    def extremal_curvature(self):
        """Principal curvature of largest magnitude at each point, sign kept."""
        lam = self.eigenvalues()
        low, high = lam[..., 0], lam[..., -1]
        return np.where(np.abs(high) >= np.abs(low), high, low)

    def gamma_norm_sq(self, X):
        """|X|^2_gamma for tangent components X of shape (n, ...)."""
        return np.einsum("i...,ij...,j...->...", X, self.gamma, X)

    def gamma_inv_norm_sq(self, X):
        """gamma^{ij} X_i X_j for covector components X of shape (n, ...)."""
        return np.einsum("i...,ij...,j...->...", X, self.gamma_inv, X)


def _slope_over_radius(u_rho, grid: grids.Grid) -> np.ndarray:
    """u'/rho on a radial grid, with the axis filled by even extrapolation.

    Filling the axis node with a direct second-derivative stencil (its
    analytic limit) gives it a truncation error of h^2 u''''/12 while the
    neighbouring ratios carry h^2 u''''/6 from the centered first
    derivative.  That mismatch is a genuine kink which second-difference
    consumers (the surface Laplacian of curvature fields) amplify into an
    O(1) error beside the axis.  Extrapolating the even profile through the
    first two interior nodes instead keeps the discretization error a
    smooth function of the radius.
    """
    rho = grid.axis()
    out = np.empty_like(u_rho)
    out[1:] = u_rho[1:] / rho[1:]
    out[0] = (4.0 * out[1] - out[2]) / 3.0
    return out


class GeometryFields(JetFields):
    """Jet geometry of a discrete height field over a grid.

    Radial profiles are embedded as jets along the first coordinate axis:
    du = (u', 0, ..., 0) and d2u = diag(u'', u'/rho, ..., u'/rho), with the
    axis value of u'/rho filled by even extrapolation.  The generic tensor
    formulas then apply unchanged in both modes.
    """

    def __init__(self, grid: grids.Grid, u_values, margin_floor: float = MARGIN_FLOOR):
        u_values = np.asarray(u_values, dtype=float)
        n = grid.dimension
        if grid.mode == grids.RADIAL:
            u_rho, u_rhorho = grids.radial_jet(u_values, grid)
            sor = _slope_over_radius(u_rho, grid)
            du = np.zeros((n,) + grid.shape)
            du[0] = u_rho
            d2u = np.zeros((n, n) + grid.shape)
            d2u[0, 0] = u_rhorho
            for k in range(1, n):
                d2u[k, k] = sor
            self.u_rho = u_rho
            self.u_rhorho = u_rhorho
            self.slope_over_rho = sor
        else:
            du, d2u = grids.cartesian_jet(u_values, grid)
        self.grid = grid
        super().__init__(u_values, du, d2u, margin_floor=margin_floor, where=grid.mode)

    @cached_property
    def measure(self):
        """Node measure of the induced volume used by norms and adjointness."""
        if self.grid.mode == grids.RADIAL:
            return grids.radial_measure(self.u, self.v, self.grid)
        return self.weight

    def laplacian(self, values) -> np.ndarray:
        """Discrete surface Laplacian of a node field on this geometry."""
        if self.grid.mode == grids.RADIAL:
            return grids.laplace_beltrami_radial(
                values, self.u, self.v, self.grid, margin_floor=self.margin_floor
            )
        return grids.laplace_beltrami_cartesian(
            values, self.weight, self.gamma_inv, self.grid
        )


def laplace_beltrami(f: grids.Field, geom: GeometryFields) -> grids.Field:
    """Discrete surface Laplacian of a field over a grid-bound geometry.

    The boundary ring carries one-sided values kept only for plotting;
    norms should mask it out via ``f.grid.interior_mask()``.
    """
    if f.grid != geom.grid:
        raise ValueError("field and geometry live on different grids")
    return grids.Field(f.grid, geom.laplacian(f.values))


def graph_speed_fields(u_values, grid: grids.Grid, margin_floor: float = MARGIN_FLOOR):
    """Lean flow kernel: (H/v, v^2, H, margin) without tensor assembly.

    This is the hot path of the solver; it only touches scalar node arrays.
    """
    u = np.asarray(u_values, dtype=float)
    n = grid.dimension
    if grid.mode == grids.RADIAL:
        u_rho, u_rhorho = grids.radial_jet(u, grid)
        sor = _slope_over_radius(u_rho, grid)
        grad_sq = u_rho * u_rho
        trace = u_rhorho + (n - 1.0) * sor
        quad = grad_sq * u_rhorho
    else:
        du, d2u = grids.cartesian_jet(u, grid)
        grad_sq = np.einsum("i...,i...->...", du, du)
        trace = np.einsum("ii...->...", d2u)
        quad = np.einsum("i...,ij...,j...->...", du, d2u, du)
    em2u = np.exp(-2.0 * u)
    margin = 1.0 - em2u * grad_sq
    worst_flat = int(np.argmin(margin))
    worst = float(margin.flat[worst_flat])
    if worst <= margin_floor:
        loc = np.unravel_index(worst_flat, grid.shape)
        raise NonSpacelikeError(
            f"margin {worst:.3e} at node {loc} (floor {margin_floor:.0e})",
            location=loc,
        )
    v2 = 1.0 / margin
    speed = em2u * (trace + v2 * em2u * quad) + (n + 1.0) - v2
    H = np.sqrt(v2) * speed
    return speed, v2, H, margin


def surface_geometry_generalized_eig(sample: GraphSample) -> np.ndarray:
    """Shape eigenvalues via the generalized symmetric problem h w = s gamma w.

    Redundant with ``shape_operator_eigenvalues``; kept as an independent
    route for cross-checking the eigenvalue solver in tests.
    """
    geom = surface_geometry(sample)
    return scipy.linalg.eigh(geom.h, geom.gamma, eigvals_only=True)
