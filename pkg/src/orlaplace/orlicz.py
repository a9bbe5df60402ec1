"""Orlicz structure functions with certified growth data.

An admissible structure function phi maps [0, inf) to [0, inf) with
phi(0) = 0, is strictly convex, and keeps its pointwise growth rate

    nu(t) = phi''(t) t / phi'(t)

inside a fixed band [p-1, q-1] with 1 < p <= q < inf.  Two such
functions phi, psi are compared through

    theta(t) = nu_phi(t) / nu_psi(t)      (closeness)
    rho(t)   = psi'(t) / phi'(t)          (ratio)

The second-order estimates verified elsewhere in this package require
sup theta < 2(n-1)/(n-2) and, for problems with a source term,
sup_{[0,1]} rho < inf.  This module builds the standard families,
certifies their growth bands at construction time, estimates the two
suprema on log grids, and provides one-dimensional convolution
smoothing of a structure function against the standard bump kernel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import (
    DegenerateDerivative,
    DomainViolation,
    InadmissibleFamily,
    NonPositiveArgument,
)

__all__ = [
    "GrowthEnvelope",
    "OrliczFunction",
    "ClosenessReport",
    "RatioReport",
    "MollifiedOrlicz",
    "growth_rate",
    "closeness",
    "ratio",
    "check_closeness",
    "check_ratio",
    "mollify",
    "make_family",
    "power",
    "quadratic",
    "power_log",
    "sum_powers",
    "derived_sqrt",
    "cordes_threshold",
    "transfer_kappa0",
    "THETA_GRID",
    "RHO_GRID",
]

# Default supremum-search grids: (tmin, tmax, points), log-spaced.
THETA_GRID = (1e-6, 1e6, 256)
RHO_GRID = (1e-8, 1.0, 256)

_FD_REL_TOL = 1e-6  # derivative consistency tolerance at construction
_ENVELOPE_SLACK = 1e-9


def _log_grid(tmin: float, tmax: float, n: int) -> np.ndarray:
    return np.geomspace(tmin, tmax, n)


def cordes_threshold(n: int) -> float:
    """Dimensional closeness threshold 2(n-1)/(n-2); +inf in the plane."""
    if n < 2:
        raise ValueError("dimension must be >= 2")
    if n == 2:
        return math.inf
    return 2.0 * (n - 1) / (n - 2)


@dataclass(frozen=True)
class GrowthEnvelope:
    """Two-sided growth band 1 < p <= q < inf for a structure function."""

    p: float
    q: float

    def __post_init__(self):
        if not (1.0 < self.p <= self.q < math.inf):
            raise InadmissibleFamily(
                f"growth envelope must satisfy 1 < p <= q < inf, got ({self.p}, {self.q})"
            )


@dataclass(frozen=True)
class OrliczFunction:
    """A structure function with its first two derivatives and growth band.

    ``value``, ``deriv`` and ``deriv2`` accept scalars or numpy arrays of
    positive reals (``value``/``deriv`` also accept 0).  Instances are
    immutable and safe to share across threads.
    """

    name: str
    value: Callable[[np.ndarray], np.ndarray]
    deriv: Callable[[np.ndarray], np.ndarray]
    deriv2: Callable[[np.ndarray], np.ndarray]
    envelope: GrowthEnvelope
    deriv_at_1: float

    def __repr__(self):
        return f"OrliczFunction({self.name})"


@dataclass(frozen=True)
class ClosenessReport:
    """Sampled closeness function with its estimated supremum and verdict."""

    ts: np.ndarray
    thetas: np.ndarray
    s_theta: float
    threshold: float
    dimension: int
    satisfied: bool
    envelope_bounds: tuple[float, float]

    @property
    def samples(self):
        return list(zip(self.ts.tolist(), self.thetas.tolist()))


@dataclass(frozen=True)
class RatioReport:
    """Sampled ratio function on [0, 1] with divergence detection near 0."""

    ts: np.ndarray
    rhos: np.ndarray
    s_rho: float
    finite: bool

    @property
    def samples(self):
        return list(zip(self.ts.tolist(), self.rhos.tolist()))


def _as_positive(t, *, allow_zero=False):
    t = np.asarray(t, dtype=float)
    if allow_zero:
        if np.any(t < 0):
            raise NonPositiveArgument("argument must be >= 0")
    elif np.any(t <= 0):
        raise NonPositiveArgument("argument must be > 0")
    return t


def growth_rate(F, t):
    """Pointwise growth rate F''(t) t / F'(t) of the derivative of F.

    Works for any object carrying ``deriv``/``deriv2`` callables, in
    particular both :class:`OrliczFunction` and :class:`MollifiedOrlicz`.
    """
    t = _as_positive(t)
    d = F.deriv(t)
    if np.any(d <= 0):
        raise DegenerateDerivative(f"{getattr(F, 'name', F)}'(t) <= 0 in growth_rate")
    return F.deriv2(t) * t / d


def closeness(phi, psi, t):
    """Closeness function theta(t): ratio of the two growth rates."""
    return growth_rate(phi, t) / growth_rate(psi, t)


def ratio(phi, psi, t):
    """Ratio function rho(t) = psi'(t) / phi'(t).

    At t = 0 the limit is estimated from the smallest point of the
    standard rho grid.
    """
    t = _as_positive(t, allow_zero=True)
    t_eval = np.where(t == 0.0, RHO_GRID[0], t)
    d = phi.deriv(t_eval)
    if np.any(d <= 0):
        raise DegenerateDerivative(f"{getattr(phi, 'name', phi)}'(t) <= 0 in ratio")
    return psi.deriv(t_eval) / d


def _golden_max(f, a, b, iters=80):
    """Golden-section maximisation of f over [a, b]."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc < fd:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
        else:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
    return max(fc, fd)


def check_closeness(phi, psi, n, grid=THETA_GRID) -> ClosenessReport:
    """Estimate sup theta over (0, inf) and test it against the threshold.

    The supremum is sampled on a log grid spanning at least [1e-6, 1e6]
    with >= 256 points and refined by golden-section ascent around the
    maximal sample.  The boundary case s_theta == threshold counts as
    not satisfied (the hypothesis is a strict inequality).
    """
    tmin, tmax, npts = grid
    if tmin > 1e-6 or tmax < 1e6 or npts < 256:
        raise ValueError("closeness grid must span [1e-6, 1e6] with >= 256 points")
    ts = _log_grid(tmin, tmax, npts)
    thetas = closeness(phi, psi, ts)
    i = int(np.argmax(thetas))
    lo = ts[max(i - 1, 0)]
    hi = ts[min(i + 1, npts - 1)]
    refined = _golden_max(
        lambda lt: float(closeness(phi, psi, math.exp(lt))), math.log(lo), math.log(hi)
    )
    s_theta = max(float(thetas[i]), refined)
    threshold = cordes_threshold(n)
    bounds = (
        (phi.envelope.p - 1.0) / (psi.envelope.q - 1.0),
        (phi.envelope.q - 1.0) / (psi.envelope.p - 1.0),
    )
    return ClosenessReport(
        ts=ts,
        thetas=thetas,
        s_theta=s_theta,
        threshold=threshold,
        dimension=n,
        satisfied=bool(s_theta < threshold),
        envelope_bounds=bounds,
    )


def check_ratio(phi, psi, grid=RHO_GRID) -> RatioReport:
    """Sample rho on a log grid of [1e-8, 1] and detect divergence at 0.

    The report is marked non-finite when any sample overflows or when
    the supremum over the finest sampled decade exceeds 1.5 times the
    supremum over the next decade, i.e. rho keeps growing as t -> 0.
    """
    tmin, tmax, npts = grid
    ts = _log_grid(tmin, tmax, npts)
    rhos = ratio(phi, psi, ts)
    ok = bool(np.all(np.isfinite(rhos)))
    if ok:
        finest = rhos[ts <= tmin * 10.0]
        nxt = rhos[(ts > tmin * 10.0) & (ts <= tmin * 100.0)]
        ok = float(np.max(finest)) <= 1.5 * float(np.max(nxt))
    s_rho = float(np.max(rhos)) if np.all(np.isfinite(rhos)) else math.inf
    return RatioReport(ts=ts, rhos=rhos, s_rho=s_rho, finite=ok)


# ---------------------------------------------------------------------------
# convolution smoothing against the standard bump
# ---------------------------------------------------------------------------


def _bump(x):
    """Unnormalised C^inf bump exp(1/(x^2-1)) supported on (-1, 1)."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = np.abs(x) < 1.0
    out[inside] = np.exp(1.0 / (x[inside] ** 2 - 1.0))
    return out


@dataclass(frozen=True)
class MollifiedOrlicz:
    """Structure function smoothed by convolution with the bump kernel.

    Values are Gauss-Legendre approximations of the convolution over
    [-kappa, kappa]; derivatives commute with the convolution, so
    ``deriv``/``deriv2`` smooth the base derivatives directly.  The
    kernel normalisation uses the same quadrature rule, hence constants
    are reproduced exactly.  Evaluation requires t >= kappa; when the
    smoothing is paired with a regularised problem with parameter
    epsilon, the intended domain is t >= sqrt(epsilon)/2 and kappa must
    stay below that.
    """

    base: OrliczFunction
    kappa: float
    quadrature_order: int
    lower_domain: float
    _nodes: np.ndarray
    _weights: np.ndarray

    @property
    def name(self):
        return f"mollified({self.base.name}, kappa={self.kappa:g})"

    def _convolve(self, f, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < self.kappa * (1.0 - 1e-12)):
            raise DomainViolation(
                f"mollified evaluation at t < kappa = {self.kappa:g}"
            )
        shifted = t[..., None] - self.kappa * self._nodes
        return np.einsum("...k,k->...", f(shifted), self._weights)

    def value(self, t):
        return self._convolve(self.base.value, t)

    def deriv(self, t):
        return self._convolve(self.base.deriv, t)

    def deriv2(self, t):
        return self._convolve(self.base.deriv2, t)


def mollify(F: OrliczFunction, kappa: float, order: int = 64) -> MollifiedOrlicz:
    """Smooth F by convolution with the bump kernel of radius kappa.

    ``order`` is the Gauss-Legendre point count on [-kappa, kappa]; the
    kernel mass is normalised through the same rule so that constants
    survive the smoothing bit-exactly.  Order 64 keeps the independent
    normalisation check |integral(zeta) - 1| below 1e-10; 32 does not.
    """
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    if order < 16:
        raise ValueError("quadrature order must be >= 16")
    x, w = np.polynomial.legendre.leggauss(order)
    zeta = _bump(x)
    weights = w * zeta / np.sum(w * zeta)
    return MollifiedOrlicz(
        base=F,
        kappa=float(kappa),
        quadrature_order=int(order),
        lower_domain=float(kappa),
        _nodes=x,
        _weights=weights,
    )


def mollifier_mass(order: int = 64, oracle_points: int = 0) -> float:
    """Mass of the normalised kernel, via its own rule or a trapezoid oracle.

    With ``oracle_points`` > 0 the normalised kernel is re-integrated by
    an independent dense trapezoid rule; the result should be 1 up to
    the quadrature error of the defining rule.
    """
    x, w = np.polynomial.legendre.leggauss(order)
    c = 1.0 / float(np.sum(w * _bump(x)))
    if oracle_points:
        t = np.linspace(-1.0, 1.0, oracle_points)
        return c * float(np.trapezoid(_bump(t), t))
    return c * float(np.sum(w * _bump(x)))


# ---------------------------------------------------------------------------
# built-in families
# ---------------------------------------------------------------------------


def _fd_consistency(F, tmin=1e-4, tmax=1e4, n=48, rel=1e-5):
    """Check deriv = d(value)/dt and deriv2 = d(deriv)/dt by central FD."""
    ts = _log_grid(tmin, tmax, n)
    hs = rel * ts
    fd1 = (F.value(ts + hs) - F.value(ts - hs)) / (2.0 * hs)
    fd2 = (F.deriv(ts + hs) - F.deriv(ts - hs)) / (2.0 * hs)
    d1 = F.deriv(ts)
    d2 = F.deriv2(ts)
    err1 = np.max(np.abs(fd1 - d1) / np.abs(d1))
    err2 = np.max(np.abs(fd2 - d2) / np.maximum(np.abs(d2), 1e-300))
    if err1 > _FD_REL_TOL or err2 > _FD_REL_TOL:
        raise InadmissibleFamily(
            f"{F.name}: derivative tables inconsistent (fd errors {err1:.2e}, {err2:.2e})"
        )


def _validate(F: OrliczFunction, fd_points=48, fd_span=(1e-4, 1e4)) -> OrliczFunction:
    ts = _log_grid(*THETA_GRID)
    if abs(float(F.value(0.0))) > 1e-12:
        raise InadmissibleFamily(f"{F.name}: value(0) != 0")
    d1 = F.deriv(ts)
    d2 = F.deriv2(ts)
    if np.any(d1 <= 0) or np.any(d2 <= 0):
        raise InadmissibleFamily(f"{F.name}: derivative not strictly positive")
    nu = d2 * ts / d1
    lo, hi = F.envelope.p - 1.0, F.envelope.q - 1.0
    if np.any(nu < lo - _ENVELOPE_SLACK) or np.any(nu > hi + _ENVELOPE_SLACK):
        raise InadmissibleFamily(
            f"{F.name}: growth rate leaves [{lo:g}, {hi:g}]"
            f" (sampled range [{nu.min():g}, {nu.max():g}])"
        )
    _fd_consistency(F, fd_span[0], fd_span[1], fd_points)
    return F


def _sampled_envelope(deriv, deriv2, margin=0.05) -> GrowthEnvelope:
    """Growth band from sampled min/max of the growth rate, widened by margin."""
    ts = _log_grid(*THETA_GRID)
    nu = deriv2(ts) * ts / deriv(ts)
    nu_min, nu_max = float(np.min(nu)), float(np.max(nu))
    if not (0.0 < nu_min <= nu_max < math.inf):
        raise InadmissibleFamily(
            f"sampled growth rate leaves (0, inf): [{nu_min:g}, {nu_max:g}]"
        )
    return GrowthEnvelope(1.0 + (1.0 - margin) * nu_min, 1.0 + (1.0 + margin) * nu_max)


def power(p: float) -> OrliczFunction:
    """Pure power family t^p / p; its growth rate is identically p - 1."""
    if p <= 1:
        raise InadmissibleFamily("power family needs p > 1")
    p = float(p)

    def value(t):
        t = np.asarray(t, dtype=float)
        return t**p / p

    def deriv(t):
        return np.asarray(t, dtype=float) ** (p - 1.0)

    def deriv2(t):
        return (p - 1.0) * np.asarray(t, dtype=float) ** (p - 2.0)

    F = OrliczFunction(f"power({p:g})", value, deriv, deriv2, GrowthEnvelope(p, p), 1.0)
    return _validate(F)


def quadratic() -> OrliczFunction:
    """The quadratic t^2 / 2, whose gradient field is the identity."""

    def value(t):
        t = np.asarray(t, dtype=float)
        return 0.5 * t * t

    def deriv(t):
        return np.asarray(t, dtype=float)

    def deriv2(t):
        return np.ones_like(np.asarray(t, dtype=float))

    F = OrliczFunction("quadratic", value, deriv, deriv2, GrowthEnvelope(2.0, 2.0), 1.0)
    return _validate(F)


def power_log(p: float, alpha: float, c: float) -> OrliczFunction:
    """Zygmund-type family t^p log^alpha(c + t).

    c must be large enough that the growth band stays inside (1, inf);
    this is checked by sampling and :class:`InadmissibleFamily` is
    raised otherwise.
    """
    if p <= 1:
        raise InadmissibleFamily("power_log family needs p > 1")
    p, alpha, c = float(p), float(alpha), float(c)
    if c <= 1.0:
        raise InadmissibleFamily("power_log needs c > 1 so that log(c + t) > 0")

    def value(t):
        t = np.asarray(t, dtype=float)
        return t**p * np.log(c + t) ** alpha

    def deriv(t):
        t = np.asarray(t, dtype=float)
        L = np.log(c + t)
        return t ** (p - 1.0) * L ** (alpha - 1.0) * (p * L + alpha * t / (c + t))

    def deriv2(t):
        t = np.asarray(t, dtype=float)
        L = np.log(c + t)
        r = t / (c + t)
        core = (
            p * (p - 1.0) * L**2
            + 2.0 * p * alpha * r * L
            + alpha * (alpha - 1.0) * r**2
            - alpha * L * r**2
        )
        return t ** (p - 2.0) * L ** (alpha - 2.0) * core

    env = _sampled_envelope(deriv, deriv2)
    F = OrliczFunction(
        f"power_log({p:g},{alpha:g},{c:g})", value, deriv, deriv2, env, float(deriv(1.0))
    )
    return _validate(F)


def sum_powers(p: float, q: float, a: float) -> OrliczFunction:
    """Double-power family t^p + a t^q with exact band (min(p,q), max(p,q))."""
    if p <= 1 or q <= 1 or a <= 0:
        raise InadmissibleFamily("sum_powers needs p, q > 1 and a > 0")
    p, q, a = float(p), float(q), float(a)

    def value(t):
        t = np.asarray(t, dtype=float)
        return t**p + a * t**q

    def deriv(t):
        t = np.asarray(t, dtype=float)
        return p * t ** (p - 1.0) + a * q * t ** (q - 1.0)

    def deriv2(t):
        t = np.asarray(t, dtype=float)
        return p * (p - 1.0) * t ** (p - 2.0) + a * q * (q - 1.0) * t ** (q - 2.0)

    env = GrowthEnvelope(min(p, q), max(p, q))
    F = OrliczFunction(
        f"sum_powers({p:g},{q:g},{a:g})", value, deriv, deriv2, env, float(deriv(1.0))
    )
    return _validate(F)


def _adaptive_simpson(f, a, b, tol, depth=30):
    """Classic adaptive Simpson with Richardson acceptance test."""

    def simpson(x0, x2, f0, f1, f2):
        return (x2 - x0) / 6.0 * (f0 + 4.0 * f1 + f2)

    def recurse(x0, x2, f0, f1, f2, whole, tol, depth):
        xm = 0.5 * (x0 + x2)
        xl, xr = 0.5 * (x0 + xm), 0.5 * (xm + x2)
        fl, fr = f(xl), f(xr)
        left = simpson(x0, xm, f0, fl, f1)
        right = simpson(xm, x2, f1, fr, f2)
        if depth <= 0 or abs(left + right - whole) <= 15.0 * tol:
            return left + right + (left + right - whole) / 15.0
        return recurse(x0, xm, f0, fl, f1, left, 0.5 * tol, depth - 1) + recurse(
            xm, x2, f1, fr, f2, right, 0.5 * tol, depth - 1
        )

    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    return recurse(a, b, fa, fm, fb, simpson(a, b, fa, fm, fb), tol, depth)


def derived_sqrt(base: OrliczFunction) -> OrliczFunction:
    """Family psi defined through its derivative psi'(t) = sqrt(base'(t) t).

    psi itself is recovered by adaptive Simpson quadrature from 0, with
    tolerance 1e-12 relative to the local scale psi'(t) t.  The growth
    rate of psi is (nu + 1)/2, so a (p, q) base yields the exact band
    (p/2 + 1, q/2 + 1).
    """
    bderiv = base.deriv
    bderiv2 = base.deriv2

    def deriv(t):
        t = np.asarray(t, dtype=float)
        return np.sqrt(bderiv(t) * t)

    def deriv2(t):
        t = np.asarray(t, dtype=float)
        return (bderiv2(t) * t + bderiv(t)) / (2.0 * np.sqrt(bderiv(t) * t))

    def _value_scalar(t):
        if t == 0.0:
            return 0.0
        scale = float(deriv(t)) * t
        return _adaptive_simpson(lambda s: float(deriv(s)) if s > 0 else 0.0,
                                 0.0, t, 1e-12 * scale)

    def value(t):
        t = np.asarray(t, dtype=float)
        if t.ndim == 0:
            return np.float64(_value_scalar(float(t)))
        return np.array([_value_scalar(x) for x in t.ravel()]).reshape(t.shape)

    env = GrowthEnvelope(base.envelope.p / 2.0 + 1.0, base.envelope.q / 2.0 + 1.0)
    F = OrliczFunction(
        f"derived_sqrt({base.name})", value, deriv, deriv2, env, float(deriv(1.0))
    )
    return _validate(F, fd_points=24, fd_span=(1e-3, 1e3))


def make_family(spec: dict) -> OrliczFunction:
    """Construct a built-in family from a tagged record.

    Accepted records::

        {"kind": "power", "p": 3.0}
        {"kind": "power_log", "p": 2, "alpha": 1, "c": 2.718281828}
        {"kind": "sum_powers", "p": 2, "q": 4, "a": 1}
        {"kind": "quadratic"}
        {"kind": "derived_sqrt", "base": <record>}
    """
    if not isinstance(spec, dict) or "kind" not in spec:
        raise InadmissibleFamily(f"family spec must be a tagged record, got {spec!r}")
    kind = spec["kind"]
    if kind == "power":
        return power(spec["p"])
    if kind == "quadratic":
        return quadratic()
    if kind == "power_log":
        return power_log(spec["p"], spec["alpha"], spec["c"])
    if kind == "sum_powers":
        return sum_powers(spec["p"], spec["q"], spec["a"])
    if kind == "derived_sqrt":
        return derived_sqrt(make_family(spec["base"]))
    raise InadmissibleFamily(f"unknown family kind {kind!r}")


def transfer_kappa0(phi, psi, n, epsilon, M, samples=128) -> float:
    """Largest smoothing radius keeping the widened growth bands valid.

    Bisects for the largest kappa < sqrt(epsilon)/2 such that on
    [sqrt(epsilon), M] the smoothed growth rates stay inside the widened
    bands [(p-1)/2, q] and [(pt-1)/2, qt] and the smoothed closeness
    stays below the midpoint of s_theta and the dimensional threshold.
    """
    s_theta = check_closeness(phi, psi, n).s_theta
    threshold = cordes_threshold(n)
    ts = _log_grid(math.sqrt(epsilon), M, samples)

    def admissible(kappa):
        if kappa >= ts[0]:
            return False
        phi_k = mollify(phi, kappa)
        psi_k = mollify(psi, kappa)
        nu = growth_rate(phi_k, ts)
        mu = growth_rate(psi_k, ts)
        p, q = phi.envelope.p, phi.envelope.q
        pt, qt = psi.envelope.p, psi.envelope.q
        if np.any(nu < 0.5 * (p - 1.0)) or np.any(nu > q):
            return False
        if np.any(mu < 0.5 * (pt - 1.0)) or np.any(mu > qt):
            return False
        if math.isfinite(threshold):
            if np.any(nu / mu > 0.5 * (s_theta + threshold)):
                return False
        return True

    hi = 0.5 * math.sqrt(epsilon) * (1.0 - 1e-9)
    lo = hi * 1e-4
    if admissible(hi):
        return hi
    if not admissible(lo):
        raise InadmissibleFamily(
            "no admissible smoothing radius found; growth transfer failed"
        )
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if admissible(mid):
            lo = mid
        else:
            hi = mid
    return lo
