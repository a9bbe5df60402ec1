"""Uniform-grid discrete fields and their finite-difference calculus.

Scalar, vector and matrix fields live on a shared uniform grid with the
same spacing in both axes.  Values are stored row-major with y as the
slow axis, i.e. ``values[j, i]`` sits at ``(x0 + i h, y0 + j h)``.

Differential operators are 2nd-order finite differences: central in the
interior, one-sided at the boundary.  The nonlinear gradient field of a
structure function psi,

    V_psi(grad u) = psi'(s)/s * grad u,      s = sqrt(|grad u|^2 + eps),

is provided together with its closed-form spatial derivative

    D(V_psi) = psi'(s)/s * (I + (mu(s) - 1) grad u (x) grad u / s^2) D^2 u,

so the finite-difference Jacobian of V_psi and the closed form can be
played against each other in refinement studies.

All field types are immutable value objects; every operation is a pure
function of its inputs and data-parallel over nodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import convolve2d

from .errors import BoundViolation, GridTooSmall, KernelUnderResolved
from .orlicz import MollifiedOrlicz, growth_rate

__all__ = [
    "Grid2D",
    "ScalarField",
    "VectorField2",
    "MatrixField",
    "AuxiliaryPair",
    "gradient",
    "hessian",
    "divergence",
    "jacobian",
    "v_field",
    "dv_field_analytic",
    "auxiliary_pair",
    "mollify_field",
    "interior_mask",
]


@dataclass(frozen=True)
class Grid2D:
    """Uniform grid: node (i, j) at (x0 + i h, y0 + j h), 0-based."""

    nx: int
    ny: int
    h: float
    x0: float = 0.0
    y0: float = 0.0

    def __post_init__(self):
        if self.nx < 3 or self.ny < 3:
            raise GridTooSmall(f"grid must be at least 3x3, got {self.nx}x{self.ny}")
        if self.h <= 0:
            raise ValueError("grid spacing must be positive")

    @property
    def xs(self):
        return self.x0 + self.h * np.arange(self.nx)

    @property
    def ys(self):
        return self.y0 + self.h * np.arange(self.ny)

    def meshes(self):
        """Coordinate arrays shaped (ny, nx)."""
        return np.meshgrid(self.xs, self.ys)

    def refined(self) -> "Grid2D":
        """Same box with halved spacing (nodes nested)."""
        return Grid2D(2 * self.nx - 1, 2 * self.ny - 1, self.h / 2, self.x0, self.y0)


def _check_values(grid, arr, name):
    arr = np.asarray(arr, dtype=float)
    if arr.shape != (grid.ny, grid.nx):
        raise ValueError(f"{name} must have shape (ny, nx) = {(grid.ny, grid.nx)}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


@dataclass(frozen=True)
class ScalarField:
    grid: Grid2D
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _check_values(self.grid, self.values, "values"))

    @classmethod
    def from_function(cls, grid: Grid2D, fn) -> "ScalarField":
        X, Y = grid.meshes()
        return cls(grid, np.asarray(fn(X, Y), dtype=float) + np.zeros_like(X))

    @classmethod
    def constant(cls, grid: Grid2D, c: float) -> "ScalarField":
        return cls(grid, np.full((grid.ny, grid.nx), float(c)))


@dataclass(frozen=True)
class VectorField2:
    grid: Grid2D
    vx: np.ndarray
    vy: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "vx", _check_values(self.grid, self.vx, "vx"))
        object.__setattr__(self, "vy", _check_values(self.grid, self.vy, "vy"))

    def norm(self):
        return np.hypot(self.vx, self.vy)


@dataclass(frozen=True)
class MatrixField:
    grid: Grid2D
    m11: np.ndarray
    m12: np.ndarray
    m21: np.ndarray
    m22: np.ndarray

    def __post_init__(self):
        for name in ("m11", "m12", "m21", "m22"):
            object.__setattr__(self, name, _check_values(self.grid, getattr(self, name), name))

    def frobenius_sq(self):
        return self.m11**2 + self.m12**2 + self.m21**2 + self.m22**2

    def trace(self):
        return self.m11 + self.m22


def interior_mask(grid: Grid2D, collar: int = 1) -> np.ndarray:
    """Boolean mask of nodes at least ``collar`` nodes away from the boundary."""
    m = np.zeros((grid.ny, grid.nx), dtype=bool)
    m[collar:-collar, collar:-collar] = True
    return m


def _d(arr, h, axis):
    """First derivative, central inside and 2nd-order one-sided at the edges."""
    return np.gradient(arr, h, axis=axis, edge_order=2)


def _d2(arr, h, axis):
    """Second derivative along one axis, one-sided 2nd-order at the edges."""
    a = np.moveaxis(arr, axis, -1)
    out = np.empty_like(a)
    out[..., 1:-1] = (a[..., 2:] - 2.0 * a[..., 1:-1] + a[..., :-2]) / h**2
    if a.shape[-1] >= 4:
        out[..., 0] = (2 * a[..., 0] - 5 * a[..., 1] + 4 * a[..., 2] - a[..., 3]) / h**2
        out[..., -1] = (2 * a[..., -1] - 5 * a[..., -2] + 4 * a[..., -3] - a[..., -4]) / h**2
    else:
        # width 3: the quadratic interpolant has constant second derivative
        out[..., 0] = out[..., 1]
        out[..., -1] = out[..., 1]
    return np.moveaxis(out, -1, axis)


def gradient(u: ScalarField) -> VectorField2:
    """Discrete gradient of a scalar field; exact on affine fields."""
    uy = _d(u.values, u.grid.h, axis=0)
    ux = _d(u.values, u.grid.h, axis=1)
    return VectorField2(u.grid, ux, uy)


def hessian(u: ScalarField) -> MatrixField:
    """Discrete Hessian; the mixed entry is a centered cross stencil inside."""
    h = u.grid.h
    uxx = _d2(u.values, h, axis=1)
    uyy = _d2(u.values, h, axis=0)
    uxy = _d(_d(u.values, h, axis=1), h, axis=0)
    return MatrixField(u.grid, uxx, uxy, uxy, uyy)


def divergence(V: VectorField2) -> ScalarField:
    """Discrete divergence with the same stencils as :func:`gradient`."""
    h = V.grid.h
    return ScalarField(V.grid, _d(V.vx, h, axis=1) + _d(V.vy, h, axis=0))


def jacobian(V: VectorField2) -> MatrixField:
    """Finite-difference Jacobian D(V), entry (i, j) = d V_i / d x_j."""
    h = V.grid.h
    return MatrixField(
        V.grid,
        _d(V.vx, h, axis=1),
        _d(V.vx, h, axis=0),
        _d(V.vy, h, axis=1),
        _d(V.vy, h, axis=0),
    )


def v_field(psi, u: ScalarField, epsilon: float = 0.0) -> VectorField2:
    """Nonlinear gradient field psi'(s)/s * grad u with s = sqrt(|grad u|^2 + eps).

    ``psi`` is anything with a ``deriv`` callable.  With epsilon = 0,
    critical points map to the zero vector: psi'(0) = 0 for every
    admissible family, so 0 is the limit value along |grad u| -> 0.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    g = gradient(u)
    s2 = g.vx**2 + g.vy**2 + epsilon
    if epsilon > 0:
        w = psi.deriv(np.sqrt(s2)) / np.sqrt(s2)
    else:
        s = np.sqrt(s2)
        w = np.zeros_like(s)
        pos = s > 0
        w[pos] = psi.deriv(s[pos]) / s[pos]
    return VectorField2(u.grid, w * g.vx, w * g.vy)


def dv_field_analytic(psi, u: ScalarField, epsilon: float) -> MatrixField:
    """Closed-form derivative of the regularised nonlinear gradient field.

    Uses the discrete gradient and Hessian of u; per node,
    D(V) = psi'(s)/s (I + (mu(s)-1) g (x) g / s^2) D^2 u.
    """
    if epsilon <= 0:
        raise ValueError("the closed-form derivative needs epsilon > 0")
    g = gradient(u)
    H = hessian(u)
    s2 = g.vx**2 + g.vy**2 + epsilon
    s = np.sqrt(s2)
    w = psi.deriv(s) / s
    k = (growth_rate(psi, s) - 1.0) / s2
    g11 = w * (1.0 + k * g.vx**2)
    g12 = w * k * g.vx * g.vy
    g22 = w * (1.0 + k * g.vy**2)
    return MatrixField(
        u.grid,
        g11 * H.m11 + g12 * H.m21,
        g11 * H.m12 + g12 * H.m22,
        g12 * H.m11 + g22 * H.m21,
        g12 * H.m12 + g22 * H.m22,
    )


@dataclass(frozen=True)
class AuxiliaryPair:
    """Smoothed coefficient pair a, b with their log-derivative envelopes.

    a(t) = phi_k'(sqrt(t^2+eps))/sqrt(t^2+eps) and b likewise for psi_k.
    alpha, beta are the logarithmic derivatives a't/a, b't/b; gamma is
    (alpha+1)/(beta+1).  ``bound_constants`` collects their extrema
    (i_alpha, s_alpha, i_beta, s_beta, s_gamma) sampled over [0, c1].
    """

    a: callable
    b: callable
    alpha: callable
    beta: callable
    gamma: callable
    epsilon: float
    c1: float
    bound_constants: tuple

    @property
    def s_gamma(self):
        return self.bound_constants[4]


def auxiliary_pair(
    phi_k: MollifiedOrlicz,
    psi_k: MollifiedOrlicz,
    epsilon: float,
    c1: float,
    samples: int = 512,
) -> AuxiliaryPair:
    """Build the smoothed coefficient pair and verify its envelopes.

    Both inputs must be smoothed with the same radius kappa below
    sqrt(epsilon)/2.  The sampled alpha/beta must stay between
    min(nu_k - 1, 0) and max(nu_k - 1, 0) (and likewise for mu_k), and
    gamma below max(theta_k, 1); a violation signals a quadrature or
    family bug and raises :class:`BoundViolation`.
    """
    if epsilon <= 0 or c1 <= 0:
        raise ValueError("epsilon and c1 must be positive")
    if phi_k.kappa != psi_k.kappa:
        raise ValueError("both functions must be smoothed with the same kappa")
    if not (phi_k.kappa < 0.5 * math.sqrt(epsilon)):
        raise ValueError("need kappa < sqrt(epsilon)/2 for the paired smoothing")

    def _s(t):
        t = np.asarray(t, dtype=float)
        return np.sqrt(t * t + epsilon)

    def a(t):
        s = _s(t)
        return phi_k.deriv(s) / s

    def b(t):
        s = _s(t)
        return psi_k.deriv(s) / s

    def alpha(t):
        t = np.asarray(t, dtype=float)
        s2 = t * t + epsilon
        return (growth_rate(phi_k, np.sqrt(s2)) - 1.0) * t * t / s2

    def beta(t):
        t = np.asarray(t, dtype=float)
        s2 = t * t + epsilon
        return (growth_rate(psi_k, np.sqrt(s2)) - 1.0) * t * t / s2

    def gamma(t):
        return (alpha(t) + 1.0) / (beta(t) + 1.0)

    ts = np.linspace(0.0, c1, samples)
    al, be, ga = alpha(ts), beta(ts), gamma(ts)
    nu = growth_rate(phi_k, _s(ts))
    mu = growth_rate(psi_k, _s(ts))
    tol = 1e-9
    if np.any(al < np.minimum(nu - 1.0, 0.0) - tol) or np.any(
        al > np.maximum(nu - 1.0, 0.0) + tol
    ):
        raise BoundViolation("alpha left its envelope")
    if np.any(be < np.minimum(mu - 1.0, 0.0) - tol) or np.any(
        be > np.maximum(mu - 1.0, 0.0) + tol
    ):
        raise BoundViolation("beta left its envelope")
    if np.any(ga > np.maximum(nu / mu, 1.0) + tol):
        raise BoundViolation("gamma exceeded max(theta_k, 1)")

    bounds = (
        float(np.min(al)),
        float(np.max(al)),
        float(np.min(be)),
        float(np.max(be)),
        float(np.max(ga)),
    )
    return AuxiliaryPair(a, b, alpha, beta, gamma, float(epsilon), float(c1), bounds)


def mollify_field(u: ScalarField, delta: float) -> ScalarField:
    """Smooth a scalar field by convolution with the radial bump of radius delta.

    The discrete kernel is normalised to unit mass, so constants are
    preserved exactly and the smoothing is a sup-norm contraction.  The
    output lives on the grid shrunk by ceil(delta/h) nodes per side.
    """
    h = u.grid.h
    if delta < 2.0 * h:
        raise KernelUnderResolved(f"delta = {delta:g} under-resolved by h = {h:g}")
    m = math.ceil(delta / h)
    offsets = h * np.arange(-m, m + 1)
    RX, RY = np.meshgrid(offsets, offsets)
    rho2 = (RX**2 + RY**2) / delta**2
    kernel = np.zeros_like(rho2)
    inside = rho2 < 1.0
    kernel[inside] = np.exp(1.0 / (rho2[inside] - 1.0))
    kernel /= kernel.sum()
    if u.grid.nx - 2 * m < 3 or u.grid.ny - 2 * m < 3:
        raise GridTooSmall("grid too small for the requested smoothing radius")
    smoothed = convolve2d(u.values, kernel, mode="valid")
    g = Grid2D(
        u.grid.nx - 2 * m,
        u.grid.ny - 2 * m,
        h,
        u.grid.x0 + m * h,
        u.grid.y0 + m * h,
    )
    return ScalarField(g, smoothed)
