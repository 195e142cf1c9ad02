"""Free-space Cauchy problem: convolution solver, spherical moments and the
moment-series criteria for stationary critical and zero points at the origin.

For a datum supported in B_L(0),

    grad u(0, t) = 2 pi int_0^L r^N P^{N+2}(r, t) A(r) dr,   A(r) = int omega u0(r omega) d omega,
    u(0, t)      =      int_0^L r^{N-1} P^N(r, t) a(r) dr,   a(r) = int u0(r omega) d omega,

and expanding the kernels in powers of r gives alternating series in the
radial moments of A and a. The series converge for every t when s > 1/2, for
t^{-1/2s} L < 1 when s = 1/2 and never when s < 1/2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import CubicSpline

from .errors import DomainError, InconsistencyError, QuadratureError, TruncationError
from .kernel import kernel_profile
from .specfun import MediumParams, log_gamma, log_mellin_moment, sphere_area
from .sphere import SphericalQuadrature, real_harmonic, spherical_quadrature

DEFAULT_TRUNCATION = 24
VERDICT_TIMES = (0.5, 1.0, 2.0)


# -- data -----------------------------------------------------------------------------


@dataclass(frozen=True)
class FieldTerm:
    """One separated term phi(r) Y(omega) of a datum."""

    radial: Callable
    angular: Callable
    label: str = ""


@dataclass
class RadialAngularField:
    """Compactly supported datum u0(r omega) = sum_i phi_i(r) Y_i(omega) on B_L.

    ``radial_nodes`` are Gauss-Legendre nodes on [0, L] used for the moment
    profiles; ``values`` caches the samples on radial_nodes x quadrature nodes.
    """

    dim: int
    support: float
    terms: list
    quad: SphericalQuadrature
    n_radial: int = 64
    smoothness: str = "smooth"
    radial_nodes: np.ndarray = field(init=False)
    radial_weights: np.ndarray = field(init=False)

    def __post_init__(self):
        if not self.support > 0:
            raise DomainError("support radius must be positive")
        if self.quad.dim != self.dim:
            raise DomainError("quadrature dimension does not match the datum")
        x, w = leggauss(self.n_radial)
        self.radial_nodes = 0.5 * self.support * (x + 1.0)
        self.radial_weights = 0.5 * self.support * w
        self._values = None

    def __call__(self, points):
        pts = np.asarray(points, dtype=float)
        r = np.linalg.norm(pts, axis=-1)
        safe = np.where(r > 0, r, 1.0)
        omega = pts / safe[..., None]
        omega = np.where((r > 0)[..., None], omega, np.eye(self.dim)[0])
        out = np.zeros(r.shape)
        inside = r < self.support
        for term in self.terms:
            out += np.where(inside, term.radial(np.minimum(r, self.support)) * term.angular(omega), 0.0)
        return out

    @property
    def values(self) -> np.ndarray:
        """Samples u0(r_i omega_j), shape (n_radial, quad.size)."""
        if self._values is None:
            pts = self.radial_nodes[:, None, None] * self.quad.nodes[None, :, :]
            self._values = self(pts)
        return self._values

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def scaled(self, c: float) -> "RadialAngularField":
        terms = [FieldTerm(lambda r, f=t.radial: c * f(r), t.angular, t.label) for t in self.terms]
        return RadialAngularField(self.dim, self.support, terms, self.quad, self.n_radial, self.smoothness)

    def __add__(self, other: "RadialAngularField") -> "RadialAngularField":
        if other.dim != self.dim:
            raise DomainError("cannot add data of different dimension")
        return RadialAngularField(
            self.dim, max(self.support, other.support), self.terms + other.terms, self.quad, self.n_radial
        )


def bump(support: float, power: int = 6):
    """phi(r) = (1 - r^2/L^2)^power on [0, L]."""
    return lambda r: np.clip(1.0 - (np.asarray(r) / support) ** 2, 0.0, None) ** power


def radial_bump(dim: int, support: float = 1.0, power: int = 6, quad=None, amplitude: float = 1.0):
    quad = quad or spherical_quadrature(dim)
    b = bump(support, power)
    term = FieldTerm(lambda r: amplitude * b(r), lambda w: np.ones(w.shape[:-1]), "radial")
    return RadialAngularField(dim, support, [term], quad)


def dipole(dim: int, support: float = 1.0, direction=None, profile=None, quad=None):
    """u0(r omega) = phi(r) omega . e with phi(r) = r (1 - r^2/L^2)^6 by default."""
    quad = quad or spherical_quadrature(dim)
    e = np.zeros(dim)
    e[0] = 1.0
    if direction is not None:
        e = np.asarray(direction, dtype=float)
        e = e / np.linalg.norm(e)
    if profile is None:
        b = bump(support)
        profile = lambda r: r * b(r)
    term = FieldTerm(profile, lambda w: w @ e, "dipole")
    return RadialAngularField(dim, support, [term], quad)


def harmonic_bump(dim: int, ell: int, m: int, support: float = 1.0, power: int = 6, quad=None, amplitude=1.0):
    """u0 = amplitude r^ell (1 - r^2/L^2)^power Y_{ell m}(omega): a smooth solid harmonic times a bump."""
    quad = quad or spherical_quadrature(dim)
    b = bump(support, power)
    term = FieldTerm(
        lambda r: amplitude * np.asarray(r) ** ell * b(r),
        lambda w: real_harmonic(dim, ell, m, w),
        f"Y{ell},{m}",
    )
    return RadialAngularField(dim, support, [term], quad)


def table_field(dim: int, radii, samples, ell: int = 0, m: int = 0, quad=None):
    """Datum from a radial table (cubic spline, must vanish at the last radius) times Y_{ell m}."""
    quad = quad or spherical_quadrature(dim)
    radii = np.asarray(radii, dtype=float)
    samples = np.asarray(samples, dtype=float)
    if radii.ndim != 1 or len(radii) < 4 or np.any(np.diff(radii) <= 0) or radii[0] < 0:
        raise DomainError("table radii must be increasing, non-negative, at least 4 points")
    if abs(samples[-1]) > 1e-12 * max(1.0, np.max(np.abs(samples))):
        raise DomainError("tabulated datum must vanish at the support radius")
    spline = CubicSpline(radii, samples)
    term = FieldTerm(lambda r: spline(np.asarray(r)), lambda w: real_harmonic(dim, ell, m, w), "table")
    return RadialAngularField(dim, float(radii[-1]), [term], quad, smoothness="C2")


def combine(fields, coefficients) -> RadialAngularField:
    out = None
    for f, c in zip(fields, coefficients):
        g = f.scaled(c)
        out = g if out is None else out + g
    return out


# -- convolution --------------------------------------------------------------------


def _radial_panels(lo: float, hi: float, scale: float, breaks) -> np.ndarray:
    """Panel edges on [lo, hi], graded geometrically toward 0 at the kernel scale."""
    pts = {lo, hi}
    g = scale / 64.0
    while g < hi:
        if g > lo:
            pts.add(g)
        g *= 2.0
    for b in breaks:
        if lo < b < hi:
            pts.add(b)
    edges = np.array(sorted(pts))
    # split long panels so each is at most a quarter of the support scale
    out = [edges[0]]
    for a, b in zip(edges[:-1], edges[1:]):
        n = max(1, int(math.ceil((b - a) / (0.125 * (hi - lo)))))
        out.extend(a + (b - a) * np.arange(1, n + 1) / n)
    return np.array(out)


def _convolve_once(u0, x, t, p, n_gl, quad):
    prof = kernel_profile(p.dim, p.order)
    L = u0.support
    rx = float(np.linalg.norm(x))
    lo = max(0.0, rx - L)
    hi = rx + L
    scale = t ** (1.0 / (2.0 * p.order))
    edges = _radial_panels(lo, hi, scale, [abs(L - rx), L])
    gx, gw = leggauss(n_gl)
    a, b = edges[:-1], edges[1:]
    rho = (0.5 * (a + b)[:, None] + 0.5 * (b - a)[:, None] * gx[None, :]).ravel()
    wr = (0.5 * (b - a)[:, None] * gw[None, :]).ravel()
    kern = prof.density(rho, t) * rho ** (p.dim - 1)
    pts = x[None, None, :] + rho[:, None, None] * quad.nodes[None, :, :]
    sph = u0(pts) @ quad.weights
    return float(np.sum(wr * kern * sph))


def convolve_solution(u0: RadialAngularField, x, t: float, p: MediumParams, rtol: float = 1e-10):
    """u(x, t) = int P(x - y, t) u0(y) dy in polar coordinates centred at x.

    Returns (value, error_estimate); the estimate compares 16- and 24-point
    Gauss-Legendre panels and a coarser angular rule.
    """
    if not t > 0:
        raise DomainError("time must be positive")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (p.dim,) or u0.dim != p.dim:
        raise DomainError("point, datum and medium dimensions disagree")
    fine_quad = spherical_quadrature(p.dim, 48) if p.dim > 1 else u0.quad
    coarse_quad = spherical_quadrature(p.dim, 32) if p.dim > 1 else u0.quad
    fine = _convolve_once(u0, x, t, p, 24, fine_quad)
    err = max(abs(fine - _convolve_once(u0, x, t, p, 16, fine_quad)), abs(fine - _convolve_once(u0, x, t, p, 24, coarse_quad)))
    scale = u0.sup_norm()
    if err > max(1e-6 * scale, 1e3 * rtol * abs(fine)):
        raise QuadratureError(f"convolution unresolved at x={x}, t={t}: error estimate {err:.3e}")
    return fine, err


def gradient_fd(u0: RadialAngularField, x, t: float, p: MediumParams, step: float = 1e-3):
    """Central-difference gradient of ``convolve_solution``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    g = np.zeros(p.dim)
    for j in range(p.dim):
        e = np.zeros(p.dim)
        e[j] = step
        g[j] = (convolve_solution(u0, x + e, t, p)[0] - convolve_solution(u0, x - e, t, p)[0]) / (2.0 * step)
    return g


# -- moment profiles and series ----------------------------------------------------------


def vector_moment_profile(u0: RadialAngularField, q: SphericalQuadrature | None = None) -> np.ndarray:
    """A(r_i) = sum_j w_j omega_j u0(r_i omega_j), shape (n_radial, N)."""
    q = q or u0.quad
    if q.dim != u0.dim:
        raise DomainError("quadrature dimension does not match the datum")
    vals = u0.values if q is u0.quad else u0(u0.radial_nodes[:, None, None] * q.nodes[None, :, :])
    return (vals * q.weights[None, :]) @ q.nodes


def scalar_moment_profile(u0: RadialAngularField, q: SphericalQuadrature | None = None) -> np.ndarray:
    """a(r_i) = sum_j w_j u0(r_i omega_j), shape (n_radial,)."""
    q = q or u0.quad
    if q.dim != u0.dim:
        raise DomainError("quadrature dimension does not match the datum")
    vals = u0.values if q is u0.quad else u0(u0.radial_nodes[:, None, None] * q.nodes[None, :, :])
    return vals @ q.weights


@dataclass(frozen=True)
class MomentSeries:
    kind: str  # "vector" (A) or "scalar" (a)
    coefficients: np.ndarray  # (K,) or (K, N)
    support: float
    dim: int

    @property
    def truncation(self) -> int:
        return len(self.coefficients)


def build_moment_series(u0: RadialAngularField, kind: str, K: int = DEFAULT_TRUNCATION, profile=None) -> MomentSeries:
    """M_k = int_0^L r^{2k+p} prof(r) dr with p = N (vector) or N - 1 (scalar)."""
    if K < 8:
        raise DomainError("truncation K must be at least 8")
    if kind not in ("vector", "scalar"):
        raise DomainError("kind must be 'vector' or 'scalar'")
    if profile is None:
        profile = vector_moment_profile(u0) if kind == "vector" else scalar_moment_profile(u0)
    r, w = u0.radial_nodes, u0.radial_weights
    pw = u0.dim if kind == "vector" else u0.dim - 1
    powers = r[None, :] ** (2 * np.arange(K)[:, None] + pw)  # (K, nr)
    coef = (powers * w[None, :]) @ profile
    return MomentSeries(kind, coef, u0.support, u0.dim)


def _series_terms(ms: MomentSeries, t: float, p: MediumParams):
    """Signed series terms and the positive prefactor for the origin value/gradient."""
    n, s = p.dim, p.order
    if ms.dim != n:
        raise DomainError("moment series and medium disagree on dimension")
    h = t ** (-1.0 / (2.0 * s))
    k = np.arange(ms.truncation)
    if ms.kind == "vector":
        shift, gam_shift = 2, n / 2.0 + 1.0
        pref = (2.0 * math.pi) ** 2 * math.pi ** (n / 2.0) * t ** (-(n + 2) / (2.0 * s))
    else:
        shift, gam_shift = 0, n / 2.0
        pref = 2.0 * math.pi ** (n / 2.0) * t ** (-n / (2.0 * s))
    logc = np.array([log_mellin_moment(p, int(kk), shift) for kk in k])
    logw = 2 * k * math.log(math.pi * h) + logc - log_gamma(k + 1.0) - log_gamma(k + gam_shift)
    sign = np.where(k % 2 == 0, 1.0, -1.0)
    weights = sign * np.exp(logw)
    coef = ms.coefficients
    terms = weights[:, None] * coef if coef.ndim == 2 else weights * coef
    return terms, pref, np.exp(logw)


def _check_decay(terms, envelope, ms: MomentSeries, rtol=1e-10):
    mags = np.abs(terms) if terms.ndim == 1 else np.linalg.norm(terms, axis=1)
    # a-priori envelope: |M_k| <= L^{2k} int r^p |prof|, so weight * L^{2k} bounds the terms
    k = np.arange(len(envelope))
    env = envelope * ms.support ** (2 * k)
    peak = env.max()
    if not env[-3:].max() <= rtol * peak:
        raise TruncationError(
            f"series terms still at {env[-3:].max() / peak:.2e} of their peak at K={ms.truncation}"
        )
    return mags


def gradient_at_origin_series(ms: MomentSeries, t: float, p: MediumParams, tol: float = 0.0):
    """grad u(0, t) from the moment series. Returns (vector, all_moments_below_tol)."""
    if ms.kind != "vector":
        raise DomainError("gradient series needs the vector moment series")
    terms, pref, env = _series_terms(ms, t, p)
    _check_decay(terms, env, ms)
    return pref * terms.sum(axis=0), bool(np.all(np.abs(ms.coefficients) < tol)) if tol > 0 else None


def value_at_origin_series(ms: MomentSeries, t: float, p: MediumParams, tol: float = 0.0):
    """u(0, t) from the scalar moment series. Returns (value, all_moments_below_tol)."""
    if ms.kind != "scalar":
        raise DomainError("value series needs the scalar moment series")
    terms, pref, env = _series_terms(ms, t, p)
    _check_decay(terms, env, ms)
    return float(pref * terms.sum()), bool(np.all(np.abs(ms.coefficients) < tol)) if tol > 0 else None


def origin_response_direct(u0: RadialAngularField, t: float, p: MediumParams, kind: str, profile=None):
    """Radial kernel integrals for grad u(0,t) or u(0,t), plus the matching |A|=1 bound."""
    r, w = u0.radial_nodes, u0.radial_weights
    if kind == "vector":
        prof = kernel_profile(p.dim + 2, p.order)
        kern = 2.0 * math.pi * r**p.dim * prof.density(r, t)
        A = vector_moment_profile(u0) if profile is None else profile
        return (w * kern) @ A, float(np.sum(w * kern))
    prof = kernel_profile(p.dim, p.order)
    kern = r ** (p.dim - 1) * prof.density(r, t)
    a = scalar_moment_profile(u0) if profile is None else profile
    return float((w * kern) @ a), float(np.sum(w * kern))


# -- verdicts ------------------------------------------------------------------------


@dataclass
class VerdictEvidence:
    kind: str
    moment_sup: float
    tol: float
    times: tuple
    responses: list
    bounds: list
    route: str  # "series" or "kernel_integral"


def default_tolerance(u0: RadialAngularField) -> float:
    return 1e-8 * u0.sup_norm() * u0.support**u0.dim


def stationarity_verdict(u0: RadialAngularField, p: MediumParams, tol: float | None = None, kind: str = "critical",
                         K: int = DEFAULT_TRUNCATION):
    """Classify the origin as stationary or not for the flow started at u0.

    kind="critical" tests grad u(0,t) = 0 (balance of A), kind="zero" tests
    u(0,t) = 0 (balance of a). The moment test and the evaluated response at
    t in {0.5, 1, 2} must agree, otherwise InconsistencyError is raised.
    """
    if kind not in ("critical", "zero"):
        raise DomainError("kind must be 'critical' or 'zero'")
    tol = default_tolerance(u0) if tol is None else tol
    if not tol > 0:
        raise DomainError("tolerance must be positive")
    mk = "vector" if kind == "critical" else "scalar"
    prof = vector_moment_profile(u0) if mk == "vector" else scalar_moment_profile(u0)
    sup = float(np.max(np.abs(prof)))
    ms = build_moment_series(u0, mk, K, profile=prof)
    responses, bounds = [], []
    route = "series"
    for t in VERDICT_TIMES:
        _, bound = origin_response_direct(u0, t, p, mk, profile=prof)
        try:
            if mk == "vector":
                val, _ = gradient_at_origin_series(ms, t, p)
            else:
                val, _ = value_at_origin_series(ms, t, p)
        except TruncationError:
            route = "kernel_integral"
            val, _ = origin_response_direct(u0, t, p, mk, profile=prof)
        responses.append(float(np.linalg.norm(val)))
        bounds.append(bound)
    moments_zero = sup <= tol
    series_zero = all(rsp <= tol * b for rsp, b in zip(responses, bounds))
    evidence = VerdictEvidence(kind, sup, tol, VERDICT_TIMES, responses, bounds, route)
    if moments_zero != series_zero:
        raise InconsistencyError(
            f"moment test ({'zero' if moments_zero else 'nonzero'}, sup={sup:.3e}) and response test "
            f"({'zero' if series_zero else 'nonzero'}, max={max(responses):.3e}) disagree at tol={tol:.3e}"
        )
    if kind == "critical":
        return ("stationary_critical" if moments_zero else "moving"), evidence
    return ("stationary_zero" if moments_zero else "nonzero"), evidence
