"""Grids, finite-difference stencils, and discrete surface operators.

Two grid modes cover the geometries the solver works with:

* ``cartesian``: a uniform node-centered box ``[-extent, extent]^n``.
* ``radial``: a uniform 1-d grid on ``[0, extent]`` holding rotationally
  symmetric profiles.  Fields on radial grids are even functions of the
  radius, so the stencils at the axis use the even reflection and the
  derivative at rho = 0 vanishes identically.

All stencils are second order: central differences in the interior and
second-order one-sided differences on the outermost node layer.  They are
exact on quadratics, which the tests pin down.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import (
    DegenerateResidualError,
    NonSpacelikeError,
    OutOfDomainError,
    ResolutionTooLowError,
)

CARTESIAN = "cartesian"
RADIAL = "radial"

#: Errors below this level are rounding noise; refinement ratios computed
#: from them would be meaningless.
DEGENERATE_RESIDUAL_FLOOR = 1e-14


@dataclass(frozen=True)
class Grid:
    """Uniform grid description.

    ``resolution`` counts nodes per axis (so ``resolution - 1`` cells).
    ``extent`` is the half-width of the box in cartesian mode and the outer
    radius in radial mode.
    """

    mode: str
    dimension: int
    extent: float
    resolution: int

    def __post_init__(self):
        if self.mode not in (CARTESIAN, RADIAL):
            raise ValueError(f"unknown grid mode {self.mode!r}")
        if self.resolution < 5:
            raise ResolutionTooLowError(
                f"resolution {self.resolution} < 5: the one-sided "
                "second-derivative stencil needs at least 5 nodes"
            )
        if self.dimension < 1:
            raise ValueError("dimension must be positive")
        if self.mode == RADIAL and self.dimension < 2:
            raise ValueError("radial mode needs dimension >= 2")
        if not (self.extent > 0):
            raise ValueError("extent must be positive")

    @property
    def spacing(self) -> float:
        if self.mode == CARTESIAN:
            return 2.0 * self.extent / (self.resolution - 1)
        return self.extent / (self.resolution - 1)

    @property
    def shape(self) -> tuple:
        if self.mode == CARTESIAN:
            return (self.resolution,) * self.dimension
        return (self.resolution,)

    @property
    def node_count(self) -> int:
        return int(np.prod(self.shape))

    def axis(self) -> np.ndarray:
        """Node coordinates along one axis (radius for radial mode)."""
        if self.mode == CARTESIAN:
            return np.linspace(-self.extent, self.extent, self.resolution)
        return np.linspace(0.0, self.extent, self.resolution)

    def meshes(self) -> list:
        """Coordinate arrays per axis, each shaped like a field."""
        if self.mode == CARTESIAN:
            ax = self.axis()
            return list(np.meshgrid(*([ax] * self.dimension), indexing="ij"))
        return [self.axis()]

    def radius_squared(self) -> np.ndarray:
        """|x|^2 at every node."""
        if self.mode == RADIAL:
            return self.axis() ** 2
        r2 = np.zeros(self.shape)
        for xi in self.meshes():
            r2 += xi**2
        return r2

    def interior_mask(self, ring: int = 1) -> np.ndarray:
        """Boolean mask excluding ``ring`` node layers at the boundary.

        The radial axis node rho = 0 is interior; only the outer end is a
        boundary there.
        """
        mask = np.zeros(self.shape, dtype=bool)
        if self.mode == RADIAL:
            mask[: self.resolution - ring] = True
            return mask
        inner = (slice(ring, self.resolution - ring),) * self.dimension
        mask[inner] = True
        return mask

    def boundary_mask(self) -> np.ndarray:
        return ~self.interior_mask(ring=1)


@dataclass
class Field:
    """Scalar values, one per grid node, stored in row-major node order."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError(
                f"field shape {self.values.shape} does not match grid "
                f"shape {self.grid.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())


# ---------------------------------------------------------------------------
# stencils


def first_derivative(values: np.ndarray, h: float, axis: int = 0) -> np.ndarray:
    """Second-order d/dx along ``axis``: central inside, one-sided at ends."""
    return np.gradient(values, h, axis=axis, edge_order=2)


def second_derivative(values: np.ndarray, h: float, axis: int = 0) -> np.ndarray:
    """Second-order d2/dx2 along ``axis``."""
    a = np.moveaxis(values, axis, -1)
    out = np.empty_like(a, dtype=float)
    h2 = h * h
    out[..., 1:-1] = (a[..., 2:] - 2.0 * a[..., 1:-1] + a[..., :-2]) / h2
    out[..., 0] = (2.0 * a[..., 0] - 5.0 * a[..., 1] + 4.0 * a[..., 2] - a[..., 3]) / h2
    out[..., -1] = (
        2.0 * a[..., -1] - 5.0 * a[..., -2] + 4.0 * a[..., -3] - a[..., -4]
    ) / h2
    return np.moveaxis(out, -1, axis)


def radial_first_derivative(values: np.ndarray, h: float) -> np.ndarray:
    """d/drho for an even profile: exact zero at the axis."""
    out = np.empty_like(values, dtype=float)
    out[1:-1] = (values[2:] - values[:-2]) / (2.0 * h)
    out[0] = 0.0
    out[-1] = (3.0 * values[-1] - 4.0 * values[-2] + values[-3]) / (2.0 * h)
    return out


def radial_second_derivative(values: np.ndarray, h: float) -> np.ndarray:
    """d2/drho2 for an even profile, using the reflected ghost at the axis."""
    out = np.empty_like(values, dtype=float)
    h2 = h * h
    out[1:-1] = (values[2:] - 2.0 * values[1:-1] + values[:-2]) / h2
    out[0] = 2.0 * (values[1] - values[0]) / h2
    out[-1] = (
        2.0 * values[-1] - 5.0 * values[-2] + 4.0 * values[-3] - values[-4]
    ) / h2
    return out


def cartesian_jet(values: np.ndarray, grid: Grid):
    """Gradient (n, *shape) and Hessian (n, n, *shape) of a cartesian field."""
    n = grid.dimension
    h = grid.spacing
    grad = np.stack([first_derivative(values, h, axis=i) for i in range(n)])
    hess = np.empty((n, n) + grid.shape)
    for i in range(n):
        hess[i, i] = second_derivative(values, h, axis=i)
        for j in range(i + 1, n):
            mixed = first_derivative(grad[i], h, axis=j)
            hess[i, j] = mixed
            hess[j, i] = mixed
    return grad, hess


def radial_jet(values: np.ndarray, grid: Grid):
    """(du/drho, d2u/drho2) for a radial profile."""
    h = grid.spacing
    return radial_first_derivative(values, h), radial_second_derivative(values, h)


def field_gradient(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Spatial gradient covector (n, *shape) of a node field.

    Radial fields are rotationally symmetric, so the gradient points along
    the first axis with the radial derivative as its only component.
    """
    if grid.mode == RADIAL:
        out = np.zeros((grid.dimension,) + grid.shape)
        out[0] = radial_first_derivative(values, grid.spacing)
        return out
    return np.stack(
        [first_derivative(values, grid.spacing, axis=i) for i in range(grid.dimension)]
    )


def differentiate(f: Field):
    """Gradient and Hessian of a field as Field objects.

    Cartesian mode returns a tuple of n gradient fields and an n x n nested
    tuple of Hessian fields.  Radial mode returns one radial-derivative
    field and one second-derivative field.
    """
    grid = f.grid
    if grid.mode == RADIAL:
        du, d2u = radial_jet(f.values, grid)
        return (Field(grid, du),), ((Field(grid, d2u),),)
    grad, hess = cartesian_jet(f.values, grid)
    n = grid.dimension
    grad_fields = tuple(Field(grid, grad[i]) for i in range(n))
    hess_fields = tuple(
        tuple(Field(grid, hess[i, j]) for j in range(n)) for i in range(n)
    )
    return grad_fields, hess_fields


# ---------------------------------------------------------------------------
# surface Laplacian in divergence form


def laplacian_mask(grid: Grid) -> np.ndarray:
    """Nodes where the discrete surface Laplacian is clean second order.

    The cartesian operator differentiates fluxes built from one-sided
    boundary stencils, which degrades the outermost two rings; the radial
    flux-form operator only loses the outer end node.
    """
    return grid.interior_mask(ring=1 if grid.mode == RADIAL else 2)


def laplace_beltrami_cartesian(
    values: np.ndarray, weight: np.ndarray, gamma_inv: np.ndarray, grid: Grid
) -> np.ndarray:
    """(1/w) d_i(w gamma^{ij} d_j f) with w = sqrt(det gamma).

    Central differences throughout the interior keep the operator
    self-adjoint in the w-weighted inner product.  Boundary values fall
    back to one-sided stencils, which contaminates the outermost two node
    rings; norms should mask with ``laplacian_mask``.
    """
    n = grid.dimension
    h = grid.spacing
    grad = np.stack([first_derivative(values, h, axis=j) for j in range(n)])
    out = np.zeros(grid.shape)
    for i in range(n):
        flux = weight * np.einsum("j...,j...->...", gamma_inv[i], grad)
        out += first_derivative(flux, h, axis=i)
    return out / weight


def radial_measure(u: np.ndarray, v: np.ndarray, grid: Grid) -> np.ndarray:
    """Node measure of the induced metric volume on a radial grid.

    Node i owns the shell [rho_i - h/2, rho_i + h/2] (clipped at the axis
    and the outer edge).  Its measure is the shell volume of the metric
    density (e^{nu}/v) rho^{n-1}, with the smooth factor frozen at the node
    and the rho^{n-1} part integrated exactly, divided by h.  Away from the
    axis this is the point value of the density to O(h^2); near the axis
    the exact shell integral is what keeps the flux-form Laplacian both
    self-adjoint and uniformly second order.
    """
    n = grid.dimension
    h = grid.spacing
    rho = grid.axis()
    chat = np.exp(n * u) / v
    edges = np.concatenate(([0.0], rho[:-1] + 0.5 * h, [rho[-1]]))
    return chat * (edges[1:] ** n - edges[:-1] ** n) / (n * h)


def laplace_beltrami_radial(
    values: np.ndarray,
    u: np.ndarray,
    v: np.ndarray,
    grid: Grid,
    margin_floor: float = 1e-10,
) -> np.ndarray:
    """Surface Laplacian of a rotationally symmetric field.

    The induced metric of the graph t = u(rho) is
    ``A^2 drho^2 + B^2 dsigma^2`` with A = e^u / v and B = e^u rho, so

        Lap f = (A B^{n-1})^{-1} d/drho ( (B^{n-1}/A) df/drho ).

    Discretized in flux form on the staggered half-grid: fluxes
    (B^{n-1}/A) f' live at cell faces (the axis face flux vanishes by
    symmetry) and their differences are divided by the shell measures of
    ``radial_measure``.  That pairing makes the operator exactly
    self-adjoint in the measure-weighted inner product and keeps the nodes
    next to the axis at full second order; the outer boundary node falls
    back to a one-sided stencil and is excluded from norms.
    """
    n = grid.dimension
    h = grid.spacing
    rho = grid.axis()
    f = np.asarray(values, dtype=float)

    u_mid = 0.5 * (u[:-1] + u[1:])
    du_mid = (u[1:] - u[:-1]) / h
    m_mid = 1.0 - np.exp(-2.0 * u_mid) * du_mid**2
    worst = float(np.min(m_mid))
    if worst <= margin_floor:
        raise NonSpacelikeError(
            f"margin {worst:.3e} between nodes at or below floor {margin_floor:.0e}"
        )
    v_mid = 1.0 / np.sqrt(m_mid)
    rho_mid = 0.5 * (rho[:-1] + rho[1:])
    coef_mid = v_mid * np.exp((n - 2.0) * u_mid) * rho_mid ** (n - 1)
    flux = coef_mid * (f[1:] - f[:-1]) / h

    out = np.empty_like(f)
    measure = radial_measure(u, v, grid)
    padded = np.concatenate(([0.0], flux))
    out[:-1] = (padded[1:] - padded[:-1]) / (h * measure[:-1])

    # outer boundary: node-centered one-sided divergence of the flux
    df = radial_first_derivative(f, h)
    node_flux = v * np.exp((n - 2.0) * u) * rho ** (n - 1) * df
    dflux_end = (3.0 * node_flux[-1] - 4.0 * node_flux[-2] + node_flux[-3]) / (2.0 * h)
    out[-1] = dflux_end / (np.exp(n * u[-1]) / v[-1] * rho[-1] ** (n - 1))
    return out


# ---------------------------------------------------------------------------
# interpolation


def interpolate(f: Field, points: np.ndarray) -> np.ndarray:
    """Multilinear interpolation at spatial points (shape (m, n) or (n,)).

    Radial grids interpolate linearly in the radius of each point.  Points
    outside the grid hull raise OutOfDomainError.
    """
    grid = f.grid
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[-1] != grid.dimension:
        raise ValueError(
            f"points have {pts.shape[-1]} coordinates, grid has "
            f"dimension {grid.dimension}"
        )
    scalar = np.ndim(points) == 1
    pad = 1e-12 * max(1.0, grid.extent)
    if grid.mode == RADIAL:
        rho = np.sqrt(np.sum(pts**2, axis=-1))
        if np.any(rho > grid.extent + pad):
            worst = float(np.max(rho))
            raise OutOfDomainError(
                f"radius {worst:.6g} outside radial grid of extent {grid.extent:.6g}"
            )
        out = np.interp(np.clip(rho, 0.0, grid.extent), grid.axis(), f.values)
    else:
        if np.any(np.abs(pts) > grid.extent + pad):
            worst = float(np.max(np.abs(pts)))
            raise OutOfDomainError(
                f"coordinate {worst:.6g} outside box of half-width {grid.extent:.6g}"
            )
        interp = RegularGridInterpolator(
            tuple([grid.axis()] * grid.dimension),
            f.values,
            method="linear",
            bounds_error=False,
            fill_value=None,
        )
        out = interp(np.clip(pts, -grid.extent, grid.extent))
    return float(out[0]) if scalar else out


# ---------------------------------------------------------------------------
# norms and refinement


def masked_norms(residual: np.ndarray, mask: np.ndarray):
    """(L_inf, root-mean-square, node count) over the masked region."""
    vals = residual[mask]
    if vals.size == 0:
        raise ValueError("empty mask")
    linf = float(np.max(np.abs(vals)))
    l2 = float(np.sqrt(np.mean(vals**2)))
    return linf, l2, int(vals.size)


def refinement_order(error_coarse: float, error_fine: float) -> float:
    """Observed order log2(e_h / e_{h/2}) from one grid-halving pair."""
    if min(error_coarse, error_fine) < DEGENERATE_RESIDUAL_FLOOR:
        raise DegenerateResidualError(
            f"errors ({error_coarse:.3g}, {error_fine:.3g}) are at rounding "
            "level; refinement order is not meaningful"
        )
    return math.log2(error_coarse / error_fine)
