"""Empirical verification of the second-order estimates.

The quantities below are all desk-scale, discrete renditions of local
integral estimates for the nonlinear gradient field V_psi(grad u):

* ``caccioppoli``: the three integrals of the local estimate

      int_{B_r} |D V_psi|^2
          <= C/r^2 int_{B_2r} |V_psi - mean|^2
             + C int_{B_2r} (rho(|grad u|) f)^2

  over a concentric ball pair, with the empirical constant recorded.
* ``caccioppoli_suite``: the same across refinement levels, with
  boundedness operationalised as "the empirical constant moves by at
  most a factor 2 per mesh halving".
* ``pointwise_probe``: the pointwise matrix inequality behind the
  integral estimate, with its two constants fitted from the sampled
  densities.
* ``ibp_check``: the integration-by-parts identity used to trade the
  divergence-form term for a cutoff gradient.
* ``gehring_probe``: a reverse-Holder ratio probe for integrability
  exponents 2 + delta.
* ``fixtures``: closed-form test fields, including the two classical
  counterexamples (the unit flux of the planar saddle, whose derivative
  has the non-integrable density 2/|x|^2, and the one-dimensional
  profile with source where square-integrability switches exactly at
  the exponent beta = -1 + (p-1)/2).

Ball integrals use node-indicator quadrature: a node contributes h^2
when its center lies in the ball; nodes within two spacings of the grid
boundary never contribute.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BallOutOfDomain, ClosenessViolated, CutoffNotCompact
from .fields import (
    Grid2D,
    MatrixField,
    ScalarField,
    VectorField2,
    auxiliary_pair,
    divergence,
    dv_field_analytic,
    gradient,
    interior_mask,
    jacobian,
    v_field,
)
from .orlicz import RHO_GRID, check_closeness, check_ratio, cordes_threshold, growth_rate

__all__ = [
    "BallPair",
    "CaccioppoliReport",
    "SuiteRow",
    "SuiteResult",
    "PointwiseProbe",
    "GehringProbe",
    "caccioppoli",
    "caccioppoli_suite",
    "pointwise_probe",
    "ibp_check",
    "gehring_probe",
    "threshold_bracketing_1d",
    "fixtures",
    "AnalyticField",
    "UnitFlux",
]

_LHS_FLOOR = 1e-10  # relative floor below which a density node is treated as 0/0


@dataclass(frozen=True)
class BallPair:
    """Concentric balls B_r inside B_2r; B_2r must clear the boundary by 2h."""

    center: tuple
    r: float

    def validate(self, grid: Grid2D):
        cx, cy = self.center
        m = 2.0 * grid.h
        xmax = grid.x0 + (grid.nx - 1) * grid.h
        ymax = grid.y0 + (grid.ny - 1) * grid.h
        if not (
            cx - 2 * self.r > grid.x0 + m - 1e-12
            and cx + 2 * self.r < xmax - m + 1e-12
            and cy - 2 * self.r > grid.y0 + m - 1e-12
            and cy + 2 * self.r < ymax - m + 1e-12
        ):
            raise BallOutOfDomain(
                f"ball pair at {self.center} with r={self.r:g} does not fit "
                f"inside the grid interior with 2h margin"
            )

    def label(self):
        return f"({self.center[0]:g},{self.center[1]:g};r={self.r:g})"


def _ball_mask(grid: Grid2D, center, radius) -> np.ndarray:
    X, Y = grid.meshes()
    inside = (X - center[0]) ** 2 + (Y - center[1]) ** 2 <= radius**2
    return inside & interior_mask(grid, 2)


def ball_integral(values: np.ndarray, grid: Grid2D, center, radius) -> float:
    return float(grid.h**2 * np.sum(values[_ball_mask(grid, center, radius)]))


def ball_average(values: np.ndarray, grid: Grid2D, center, radius) -> float:
    mask = _ball_mask(grid, center, radius)
    count = np.count_nonzero(mask)
    if count == 0:
        raise BallOutOfDomain(
            f"ball at {center} with radius {radius:g} contains no interior nodes"
        )
    return float(np.sum(values[mask]) / count)


@dataclass(frozen=True)
class CaccioppoliReport:
    """The three integrals of the local estimate over one ball pair."""

    lhs: float
    rhs_osc: float
    rhs_src: float
    empirical_C: float
    h: float
    ball: BallPair


def _ratio_at(phi, psi, s):
    """Elementwise psi'/phi' with the t = 0 limit taken from the rho grid."""
    s = np.maximum(np.asarray(s, dtype=float), RHO_GRID[0])
    return psi.deriv(s) / phi.deriv(s)


def caccioppoli(
    u: ScalarField,
    phi,
    psi,
    f: ScalarField | None,
    ball: BallPair,
    epsilon: float = 0.0,
) -> CaccioppoliReport:
    """Evaluate the local estimate's integrals for one ball pair.

    With epsilon > 0 the derivative of V_psi uses the closed form;
    with epsilon = 0 it falls back to the finite-difference Jacobian.
    The source term needs ``phi`` (for the ratio weight); pass f=None
    for the homogeneous case.
    """
    grid = u.grid
    ball.validate(grid)
    V = v_field(psi, u, epsilon)
    DV = dv_field_analytic(psi, u, epsilon) if epsilon > 0 else jacobian(V)
    lhs = ball_integral(DV.frobenius_sq(), grid, ball.center, ball.r)

    mask2 = _ball_mask(grid, ball.center, 2 * ball.r)
    zx = float(np.mean(V.vx[mask2]))
    zy = float(np.mean(V.vy[mask2]))
    osc = (V.vx - zx) ** 2 + (V.vy - zy) ** 2
    rhs_osc = ball_integral(osc, grid, ball.center, 2 * ball.r) / ball.r**2

    rhs_src = 0.0
    if f is not None:
        g = gradient(u)
        s = np.sqrt(g.vx**2 + g.vy**2 + epsilon)
        rho = _ratio_at(phi, psi, s)
        rhs_src = ball_integral((rho * f.values) ** 2, grid, ball.center, 2 * ball.r)

    # classify a zero-over-zero pair as 0, at float-noise resolution: the
    # stencils amplify rounding of u by 1/h (first order) and 1/h^2 (second)
    eps_mach = np.finfo(float).eps
    scale = max(1.0, float(np.max(np.abs(u.values))))
    area = math.pi * (2.0 * ball.r) ** 2
    lhs_floor = (256.0 * eps_mach * scale / grid.h**2) ** 2 * area
    osc_floor = (256.0 * eps_mach * scale / grid.h) ** 2 * area / ball.r**2
    denom = rhs_osc + rhs_src
    if lhs <= lhs_floor and denom <= osc_floor:
        emp = 0.0
    elif denom == 0.0:
        emp = math.inf
    else:
        emp = lhs / denom
    return CaccioppoliReport(lhs, rhs_osc, rhs_src, emp, grid.h, ball)


@dataclass(frozen=True)
class SuiteRow:
    phi_name: str
    psi_name: str
    h: float
    ball: BallPair
    report: CaccioppoliReport


@dataclass(frozen=True)
class SuiteVerdict:
    phi_name: str
    psi_name: str
    ball: BallPair
    closeness_ok: bool
    ratio_ok: bool
    has_source: bool
    empirical_Cs: tuple
    stable: bool
    verdict: str  # PASS / FAIL / EXCLUDED


@dataclass(frozen=True)
class SuiteResult:
    rows: list
    verdicts: list


def caccioppoli_suite(
    phi,
    psis,
    levels,
    balls,
    *,
    n: int = 2,
    epsilon: float = 0.0,
    stability_factor: float = 2.0,
) -> SuiteResult:
    """Run the ball-pair estimate across refinement levels.

    ``levels`` is a list of (u, f) pairs on successively halved grids
    over the same box (f may be None).  A (psi, ball) combination PASSES
    when the closeness hypothesis holds (and, with a source, the ratio
    hypothesis too) and the empirical constant moves by at most
    ``stability_factor`` between consecutive levels; it is EXCLUDED when
    a hypothesis fails, and FAILS when the constants are unstable.
    """
    rows, verdicts = [], []
    for psi in psis:
        clo = check_closeness(phi, psi, n)
        rat = check_ratio(phi, psi)
        for ball in balls:
            Cs = []
            for u, f in levels:
                rep = caccioppoli(u, phi, psi, f, ball, epsilon)
                rows.append(SuiteRow(phi.name, psi.name, u.grid.h, ball, rep))
                Cs.append(rep.empirical_C)
            has_source = any(f is not None for _, f in levels)
            ratio_ok = rat.finite
            stable = all(
                math.isfinite(c) for c in Cs
            ) and all(
                _within_factor(a, b, stability_factor) for a, b in zip(Cs, Cs[1:])
            )
            if not clo.satisfied or (has_source and not ratio_ok):
                verdict = "EXCLUDED"
            elif stable:
                verdict = "PASS"
            else:
                verdict = "FAIL"
            verdicts.append(
                SuiteVerdict(
                    phi.name,
                    psi.name,
                    ball,
                    clo.satisfied,
                    ratio_ok,
                    has_source,
                    tuple(Cs),
                    stable,
                    verdict,
                )
            )
    return SuiteResult(rows, verdicts)


def _within_factor(a, b, factor):
    if a == 0.0 and b == 0.0:
        return True
    if a <= 0.0 or b <= 0.0:
        return False
    return max(a / b, b / a) <= factor


def divergence_evidence(lhs_values, min_growth: float = 0.2) -> bool:
    """True when the integral grows by at least min_growth per halving."""
    return all(b >= (1.0 + min_growth) * a for a, b in zip(lhs_values, lhs_values[1:]))


# ---------------------------------------------------------------------------
# pointwise inequality probe
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PointwiseProbe:
    lhs_density: ScalarField
    div_term: ScalarField
    src_term: ScalarField
    fitted_c: float
    fitted_C: float
    s_gamma: float


def _shifted_fields(psi_k, grads, hess, epsilon, grid):
    """V_psi and its closed-form derivative from analytic grad/hess samples."""
    gx, gy = grads
    h11, h12, h22 = hess
    s2 = gx**2 + gy**2 + epsilon
    s = np.sqrt(s2)
    w = psi_k.deriv(s) / s
    V = VectorField2(grid, w * gx, w * gy)
    k = (growth_rate(psi_k, s) - 1.0) / s2
    g11 = w * (1.0 + k * gx * gx)
    g12 = w * k * gx * gy
    g22 = w * (1.0 + k * gy * gy)
    DV = MatrixField(
        grid,
        g11 * h11 + g12 * h12,
        g11 * h12 + g12 * h22,
        g12 * h11 + g22 * h12,
        g12 * h12 + g22 * h22,
    )
    return V, DV


def _cordes_vector(DV: MatrixField, V: VectorField2, Z) -> VectorField2:
    """(DV - tr(DV) I)(V - Z), the divergence-form vector of the estimate."""
    tr = DV.trace()
    wx = V.vx - Z[0]
    wy = V.vy - Z[1]
    return VectorField2(
        DV.grid,
        (DV.m11 - tr) * wx + DV.m12 * wy,
        DV.m21 * wx + (DV.m22 - tr) * wy,
    )


def pointwise_probe(
    u_expr,
    phi_k,
    psi_k,
    epsilon: float,
    Z,
    grid: Grid2D,
    n: int = 2,
) -> PointwiseProbe:
    """Sample the three densities of the pointwise estimate and fit constants.

    The smoothed pair must satisfy the closeness precondition: the
    sampled supremum of gamma = (alpha+1)/(beta+1) over [0, C1] (C1 the
    gradient sup bound of the test field) must stay below 2(n-1)/(n-2),
    otherwise :class:`ClosenessViolated` is raised.

    The derivative-bearing densities come from the closed forms on the
    analytic gradient/Hessian; only the genuinely third-order
    divergence term is discretised.  fitted_C is a least-squares fit on
    the nodes where the source density dominates, and fitted_c is the
    worst ratio (div + C src)/lhs over interior nodes carrying mass.
    """
    X, Y = grid.meshes()
    gx, gy = u_expr.grad(X, Y)
    hess = u_expr.hess(X, Y)
    c1 = float(np.max(np.hypot(gx, gy))) + 1e-12

    aux = auxiliary_pair(phi_k, psi_k, epsilon, c1)
    s_gamma = aux.s_gamma
    threshold = cordes_threshold(n)
    if not (s_gamma < threshold):
        raise ClosenessViolated(
            f"s_gamma = {s_gamma:g} >= threshold {threshold:g} for n = {n}"
        )

    V_b, DV_b = _shifted_fields(psi_k, (gx, gy), hess, epsilon, grid)
    _, DV_a = _shifted_fields(phi_k, (gx, gy), hess, epsilon, grid)

    lhs = DV_b.frobenius_sq()
    W = _cordes_vector(DV_b, V_b, Z)
    div_term = divergence(W).values
    s = np.sqrt(gx**2 + gy**2 + epsilon)
    ba = psi_k.deriv(s) / phi_k.deriv(s)
    src = ba**2 * DV_a.trace() ** 2

    inner = interior_mask(grid, 2)
    valid = inner & (lhs > _LHS_FLOOR * float(np.max(lhs)))
    dominant = valid & (src >= 0.25 * float(np.max(src[inner]))) if np.max(src[inner]) > 0 else np.zeros_like(valid)
    if np.any(dominant):
        num = float(np.sum(src[dominant] * (lhs[dominant] - div_term[dominant])))
        den = float(np.sum(src[dominant] ** 2))
        fitted_C = max(0.0, num / den)
    else:
        fitted_C = 0.0
    if np.any(valid):
        ratios = (div_term[valid] + fitted_C * src[valid]) / lhs[valid]
        fitted_c = float(np.min(ratios))
    else:
        fitted_c = 0.0

    return PointwiseProbe(
        lhs_density=ScalarField(grid, lhs),
        div_term=ScalarField(grid, div_term),
        src_term=ScalarField(grid, src),
        fitted_c=fitted_c,
        fitted_C=fitted_C,
        s_gamma=s_gamma,
    )


def ibp_check(V_b: VectorField2, DV_b: MatrixField, eta: ScalarField, Z, grad_eta=None):
    """Discrete integration-by-parts gap of the divergence-form term.

    Returns (lhs, rhs, gap) with
    lhs = int div((DV_b - tr I)(V_b - Z)) eta and
    rhs = -int <(DV_b - tr I)(V_b - Z), grad eta>.

    When ``grad_eta`` (a :class:`VectorField2`, typically sampled from
    the cutoff's closed form) is supplied, the gap measures the
    divergence-stencil error and shrinks at second order on smooth
    data.  Without it the cutoff gradient is the discrete one, whose
    pairing with the central divergence is exactly skew-adjoint for
    interior-supported cutoffs: the gap then collapses to float noise.
    """
    grid = eta.grid
    collar = ~interior_mask(grid, 2)
    if np.max(np.abs(eta.values[collar])) > 0.0:
        raise CutoffNotCompact("cutoff must vanish on the 2-node boundary collar")
    W = _cordes_vector(DV_b, V_b, Z)
    h2 = grid.h**2
    lhs = h2 * float(np.sum(divergence(W).values * eta.values))
    geta = grad_eta if grad_eta is not None else gradient(eta)
    rhs = -h2 * float(np.sum(W.vx * geta.vx + W.vy * geta.vy))
    return lhs, rhs, abs(lhs - rhs)


# ---------------------------------------------------------------------------
# reverse-Holder / higher-integrability probe
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GehringProbe:
    delta_grid: tuple
    rows: list  # (delta, ball_label, level, ratio)
    delta_star: float


def _gehring_ratio(DV: MatrixField, src, ball: BallPair, delta: float) -> float:
    grid = DV.grid
    dens = DV.frobenius_sq()
    num = ball_average(dens ** ((2.0 + delta) / 2.0), grid, ball.center, ball.r) ** (
        1.0 / (2.0 + delta)
    )
    den = ball_average(dens, grid, ball.center, 2 * ball.r) ** 0.5
    if src is not None:
        den += ball_average(
            np.abs(src.values) ** (2.0 + delta), grid, ball.center, 2 * ball.r
        ) ** (1.0 / (2.0 + delta))
    return num / den if den > 0 else math.inf


def gehring_probe(
    coarse,
    fine,
    balls,
    delta_grid,
    *,
    ratio_cap: float = 10.0,
    stability_factor: float = 2.0,
    base_growth: float = 0.2,
) -> GehringProbe:
    """Probe integrability 2 + delta of |DV| across one mesh refinement.

    ``coarse``/``fine`` are (DV, src) pairs on two grids, one halving
    apart (src may be None).  A delta passes when, over every ball pair:
    the reverse-Holder ratio stays below ``ratio_cap`` on both levels,
    moves by at most ``stability_factor`` across the refinement, and the
    underlying squared-norm integral over B_2r grows by less than
    ``base_growth`` under the halving (a growing base integral is the
    footprint of a non-square-integrable derivative, for which no
    exponent can be reported).  delta_star is the largest passing delta,
    0 when none passes.
    """
    rows = []
    delta_star = 0.0
    for delta in sorted(delta_grid):
        ok = True
        for ball in balls:
            r_c = _gehring_ratio(coarse[0], coarse[1], ball, delta)
            r_f = _gehring_ratio(fine[0], fine[1], ball, delta)
            rows.append((delta, ball.label(), 0, r_c))
            rows.append((delta, ball.label(), 1, r_f))
            base_c = ball_integral(
                coarse[0].frobenius_sq(), coarse[0].grid, ball.center, 2 * ball.r
            )
            base_f = ball_integral(
                fine[0].frobenius_sq(), fine[0].grid, ball.center, 2 * ball.r
            )
            if not (r_c <= ratio_cap and r_f <= ratio_cap):
                ok = False
            if not _within_factor(r_c, r_f, stability_factor):
                ok = False
            if base_f > (1.0 + base_growth) * base_c:
                ok = False
        if ok:
            delta_star = max(delta_star, delta)
    return GehringProbe(tuple(sorted(delta_grid)), rows, delta_star)


# ---------------------------------------------------------------------------
# closed-form fixtures
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AnalyticField:
    """Closed-form scalar field with gradient and Hessian evaluators."""

    name: str
    value: callable
    grad: callable
    hess: callable  # returns (h11, h12, h22)

    def sample(self, grid: Grid2D) -> ScalarField:
        X, Y = grid.meshes()
        return ScalarField(grid, np.asarray(self.value(X, Y), dtype=float) + 0.0 * X)


class UnitFlux:
    """The inadmissible beta = -1 limit: psi'(t) = 1 identically.

    Not an admissible structure function (its growth rate vanishes); it
    exists to reproduce the classical non-example |grad u|^{-1} grad u.
    """

    name = "unit_flux"

    @staticmethod
    def deriv(t):
        return np.ones_like(np.asarray(t, dtype=float))


def _saddle() -> AnalyticField:
    return AnalyticField(
        "saddle",
        lambda x, y: x * x - y * y,
        lambda x, y: (2.0 * x, -2.0 * y),
        lambda x, y: (2.0 + 0.0 * x, 0.0 * x, -2.0 + 0.0 * x),
    )


def _trig() -> AnalyticField:
    return AnalyticField(
        "trig",
        lambda x, y: np.sin(x) * np.cos(y),
        lambda x, y: (np.cos(x) * np.cos(y), -np.sin(x) * np.sin(y)),
        lambda x, y: (
            -np.sin(x) * np.cos(y),
            -np.cos(x) * np.sin(y),
            -np.sin(x) * np.cos(y),
        ),
    )


def p_profile(p: float, sign: float = 1.0) -> AnalyticField:
    """One-dimensional profile ((p-1)/p) |x|^{p/(p-1)}, constant in y.

    Its flux for the matching power family is the linear field sign*x,
    so it solves the constant-source equation.  ``sign=-1`` gives the
    mirror profile solving the equation with the opposite source
    orientation.
    """
    c = (p - 1.0) / p
    e = p / (p - 1.0)

    def value(x, y):
        return sign * c * np.abs(x) ** e + 0.0 * y

    def grad(x, y):
        return (sign * np.sign(x) * np.abs(x) ** (e - 1.0), 0.0 * y)

    def hess(x, y):
        return (sign * (e - 1.0) * np.abs(x) ** (e - 2.0), 0.0 * x, 0.0 * x)

    return AnalyticField(f"p_profile({p:g},{sign:+g})", value, grad, hess)


def singular_density(x, y, n: int = 2):
    """|D(|x|^{-1} x)|^2 = (n-1) |x|^{-2}, the non-integrable counterexample density.

    The Frobenius norm of D(x/|x|) carries the dimensional constant
    n - 1 (the rank of the tangential projector): 1 in the plane, 2 in
    three dimensions.  Either way the density fails to be locally
    integrable, and the planar log-divergence per mesh halving is
    (n-1) * 2 pi log 2.
    """
    return (n - 1.0) / (np.asarray(x, dtype=float) ** 2 + np.asarray(y, dtype=float) ** 2)


def fixtures() -> dict:
    """Named closed-form test fields used across the verification suite."""
    return {
        "saddle": _saddle(),
        "trig": _trig(),
        "p_profile": p_profile,
        "unit_flux": UnitFlux(),
        "singular_density": singular_density,
    }


def threshold_bracketing_1d(p: float, beta: float, hs, r: float = 0.5):
    """Integrals of |d/dx V_psi(v')|^2 over [-r, r] for the 1-D profile.

    v is the 1-D profile fixture and psi the power family with exponent
    beta + 2, so V = sign(x) |x|^{(beta+1)/2}.  Returns the list of
    discrete integrals along the given spacings; square-integrability
    switches at beta = -1 + (p-1)/2.
    """
    e = 1.0 / (p - 1.0)  # |v'| = |x|^e
    out = []
    for h in hs:
        x = np.arange(-1.0, 1.0 + 0.5 * h, h)
        V = np.sign(x) * np.abs(x) ** (e * (beta + 1.0))
        dV = np.gradient(V, h, edge_order=2)
        sel = np.abs(x) <= r
        out.append(float(h * np.sum(dV[sel] ** 2)))
    return out


def stabilizes(values, rel_floor: float = 1e-3) -> bool:
    """Increments shrink (or vanish) along refinement: the integral settles."""
    inc = [b - a for a, b in zip(values, values[1:])]
    if all(abs(d) <= rel_floor * abs(v) for d, v in zip(inc, values[1:])):
        return True
    return all(abs(b) < abs(a) for a, b in zip(inc, inc[1:]))


def diverges(values) -> bool:
    """Increments keep growing along refinement: the integral blows up."""
    inc = [b - a for a, b in zip(values, values[1:])]
    return all(b > a > 0 for a, b in zip(inc, inc[1:]))
