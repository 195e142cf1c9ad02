"""Fractional heat kernel P(x, t; s) on R^N.

The kernel is self-similar, P(x, t; s) = t^{-N/2s} Phi(|x| t^{-1/2s}), and the
profile Phi is the radial inverse Fourier transform of exp(-(2 pi |xi|)^{2s}).
After the substitution u = 2 pi rho,

    Phi(r) = (2 pi)^{-N/2} 2^{1-N/2} int_0^inf exp(-u^{2s}) u^{N-1} Jhat(r u) du,

with Jhat(z) = J_{N/2-1}(z) / (z/2)^{N/2-1}. Three regimes are used:

* r below ``SMALL_R``: ascending series obtained term by term from Jhat;
* moderate r: integration lobe by lobe between zeros of Jhat(r u) with Wynn's
  epsilon algorithm on the alternating partial sums;
* large r: the algebraic expansion sum_k a_k r^{-2sk-N}, accepted only when
  it converges to machine precision (it is divergent for s > 1/2 at small r).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import chebyshev as C
from numpy.polynomial.legendre import leggauss

from .errors import DomainError, QuadratureError
from .specfun import (
    MediumParams,
    bessel_j_scaled,
    bessel_zero_estimate,
    gamma_fn,
    log_gamma,
    poisson_constant,
    sphere_area,
)

SMALL_R = 1e-3
# for s = 1 the quadrature's absolute round-off swamps exp(-r^2/4) beyond this
GAUSS_TAIL_R = 6.0
ASYMPTOTIC_MIN_R = 3.0
_GL_X, _GL_W = leggauss(24)


@dataclass(frozen=True)
class KernelQuery:
    radius: float
    time: float
    medium: MediumParams

    def __post_init__(self):
        if not self.time > 0:
            raise DomainError("kernel time must be positive")
        if not (self.radius >= 0 and math.isfinite(self.radius)):
            raise DomainError("kernel radius must be finite and non-negative")

    @property
    def scaled_radius(self) -> float:
        return self.radius * self.time ** (-1.0 / (2.0 * self.medium.order))


@dataclass(frozen=True)
class KernelValue:
    density: float
    method: str  # closed_form_s1 | closed_form_s_half | bessel_integral


def _prefactor(n: int) -> float:
    return (2.0 * math.pi) ** (-n / 2.0) * 2.0 ** (1.0 - n / 2.0)


# -- small-r power series -------------------------------------------------------


def _profile_small(r: float, n: int, s: float) -> float:
    alpha = 2.0 * s
    x = 0.25 * r * r
    total, k = 0.0, 0
    while True:
        lg = log_gamma((n + 2 * k) / alpha) - log_gamma(k + 1.0) - log_gamma(k + n / 2.0)
        term = (-1) ** k * math.exp(lg) * x**k if x > 0 or k == 0 else 0.0
        total += term
        if abs(term) <= 1e-17 * abs(total) or k > 60:
            break
        k += 1
    return _prefactor(n) / alpha * total


# -- large-r algebraic expansion ----------------------------------------------


def asymptotic_coefficients(n: int, s: float, kmax: int = 400):
    """Coefficients a_k of Phi(r) ~ sum_{k>=1} a_k r^{-2sk-n} (signed)."""
    alpha = 2.0 * s
    ks = np.arange(1, kmax + 1)
    sines = np.sin(0.5 * math.pi * ks * alpha)
    logmag = (
        ks * alpha * math.log(2.0)
        - (n / 2.0 + 1.0) * math.log(math.pi)
        + log_gamma(ks * alpha / 2.0 + 1.0)
        + log_gamma((ks * alpha + n) / 2.0)
        - log_gamma(ks + 1.0)
    )
    signs = np.where(ks % 2 == 1, 1.0, -1.0)
    return ks, signs * sines, logmag


def _profile_asymptotic(r: float, n: int, s: float):
    """Sum the large-r expansion; None if it has not converged to round-off."""
    if s >= 1.0:
        return None
    alpha = 2.0 * s
    ks, sgn, logmag = asymptotic_coefficients(n, s)
    logterm = logmag - (ks * alpha + n) * math.log(r)
    mag = np.exp(np.minimum(logterm, 700.0)) * np.abs(sgn)
    terms = sgn * np.exp(np.minimum(logterm, 700.0))
    csum = np.cumsum(terms)
    # stop at the first k whose term is negligible against the running sum
    tiny = mag <= 1e-16 * np.abs(csum)
    # keep going past isolated zeros of sin(pi k alpha / 2)
    ok = tiny & np.roll(tiny, -1)
    ok[-1] = False
    if not ok.any():
        return None
    idx = int(np.argmax(ok))
    # large intermediate terms mean cancellation: not usable at this radius
    if mag[: idx + 1].max() > 1e2 * abs(csum[idx]):
        return None
    return float(csum[idx])


def tail_mass(radius: float, p: MediumParams) -> float:
    """Integral of P(., 1; s) over |x| > radius from the large-r expansion."""
    n, s = p.dim, p.order
    if s >= 1.0:
        return 0.0
    alpha = 2.0 * s
    ks, sgn, logmag = asymptotic_coefficients(n, s)
    env = np.exp(logmag - ks * alpha * math.log(radius)) / (ks * alpha)
    terms = sgn * env
    idx = int(np.argmax(env < 1e-18 * env[0]))
    return sphere_area(n) * float(np.sum(terms[: idx + 1]))


# -- oscillatory quadrature -----------------------------------------------------


def wynn_epsilon(partial_sums) -> float:
    """Wynn's epsilon extrapolation of a sequence of partial sums."""
    s = np.asarray(partial_sums, dtype=float)
    m = len(s)
    prev = np.zeros(m + 1)
    cur = s.copy()
    best = s[-1]
    for col in range(1, m):
        diff = cur[1:] - cur[:-1]
        with np.errstate(divide="ignore", invalid="ignore"):
            nxt = prev[1 : len(cur)] + 1.0 / diff
        if not np.all(np.isfinite(nxt)):
            break
        prev, cur = cur, nxt
        if col % 2 == 0:
            best = cur[-1]
    return float(best)


def _integrand(u, r, n, alpha):
    return np.exp(-(u**alpha)) * u ** (n - 1) * bessel_j_scaled(n / 2.0 - 1.0, r * u)


def _segment_integrals(a, b, r, n, alpha):
    """Gauss-Legendre integrals over each [a_i, b_i]."""
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    u = mid[:, None] + half[:, None] * _GL_X[None, :]
    return half * (_integrand(u, r, n, alpha) @ _GL_W)


def _first_segment(b, r, n, alpha):
    # u = b w^4 smooths the u^alpha cusp of exp(-u^alpha) at the origin
    w = 0.5 * (_GL_X + 1.0)
    u = b * w**4
    jac = 4.0 * b * w**3
    return 0.5 * float(np.sum(_GL_W * jac * _integrand(u, r, n, alpha)))


def _panel_edges(lo, hi, alpha):
    """Subdivide [lo, hi] so every panel resolves the exp(-u^alpha) decay."""
    edges = [lo]
    u = lo
    while u < hi:
        width = 1.0 / max(1.0, alpha * u ** (alpha - 1.0)) if u > 0 else 1.0
        u = min(hi, u + 8.0 * width)
        edges.append(u)
    return edges


def _cutoff(n, alpha, u_peak):
    """Where exp(-u^alpha) u^(n-1) has dropped by exp(-48) from its peak."""
    def logf(u):
        return -(u**alpha) + (n - 1) * math.log(u)

    target = (logf(u_peak) if u_peak > 0 else 0.0) - 48.0
    lo = max(u_peak, 1.0)
    hi = 2.0 * lo
    while logf(hi) > target:
        hi *= 2.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if logf(mid) > target else (lo, mid)
    return hi


def _profile_quadrature(r: float, n: int, s: float, rtol: float = 1e-12, max_lobes: int = 40000) -> float:
    alpha = 2.0 * s
    nu = n / 2.0 - 1.0
    u_peak = ((n - 1) / alpha) ** (1.0 / alpha) if n > 1 else 0.0
    u_end = _cutoff(n, alpha, u_peak)
    max_lobes += int(2.0 * u_peak * r / math.pi)

    z1 = float(bessel_zero_estimate(nu, 1)) if nu > -0.5 else 0.5 * math.pi
    first_zero = z1 / r if r > 0 else math.inf
    head_end = min(first_zero, 1.0, u_end)
    total = _first_segment(head_end, r, n, alpha)

    # smooth (non-oscillating) region before the first zero
    if first_zero > head_end:
        stop = min(first_zero, u_end)
        edges = np.array(_panel_edges(head_end, stop, alpha))
        total += float(np.sum(_segment_integrals(edges[:-1], edges[1:], r, n, alpha)))
        if stop >= u_end:
            return _prefactor(n) * total

    sums = [total]
    estimates = []
    k = 1
    batch = 32
    while k < max_lobes:
        ks = np.arange(k, k + batch + 1)
        zs = bessel_zero_estimate(nu, ks) / r
        lobe_vals = []
        for a, b in zip(zs[:-1], zs[1:]):
            edges = np.array(_panel_edges(a, b, alpha))
            lobe_vals.append(float(np.sum(_segment_integrals(edges[:-1], edges[1:], r, n, alpha))))
        for v in lobe_vals:
            total += v
            sums.append(total)
        k += batch
        last_u = zs[-1]
        env = math.exp(-(last_u**alpha)) * last_u ** (n - 1)
        if env < 1e-18 * max(abs(total), 1e-300) or last_u > u_end:
            return _prefactor(n) * total
        if last_u > 2.0 * u_peak + 1.0:
            est = wynn_epsilon(sums[-24:])
            estimates.append(est)
            if len(estimates) >= 2:
                e1, e0 = estimates[-1], estimates[-2]
                if abs(e1 - e0) <= rtol * abs(e1):
                    return _prefactor(n) * e1
    raise QuadratureError(f"oscillatory tail did not converge for r={r}, N={n}, s={s}")


def profile(r: float, p: MediumParams) -> float:
    """Phi(r) = P(x, 1; s) at |x| = r."""
    n, s = p.dim, p.order
    r = float(r)
    if r < SMALL_R:
        return _profile_small(r, n, s)
    if s == 1.0 and r > GAUSS_TAIL_R:
        return (4.0 * math.pi) ** (-n / 2.0) * math.exp(-0.25 * r * r)
    if r >= ASYMPTOTIC_MIN_R:
        val = _profile_asymptotic(r, n, s)
        if val is not None:
            return val
    return _profile_quadrature(r, n, s)


# -- public operations ------------------------------------------------------------


def heat_kernel_closed_form(q: KernelQuery) -> KernelValue:
    n, s = q.medium.dim, q.medium.order
    r2, t = q.radius**2, q.time
    if s == 1.0:
        return KernelValue((4.0 * math.pi * t) ** (-n / 2.0) * math.exp(-r2 / (4.0 * t)), "closed_form_s1")
    if s == 0.5:
        return KernelValue(poisson_constant(n) * t / (t * t + r2) ** ((n + 1) / 2.0), "closed_form_s_half")
    raise DomainError(f"no closed form for s={s}; only s in {{1/2, 1}}")


def heat_kernel(q: KernelQuery) -> KernelValue:
    """P(x, t; s) at |x| = q.radius by the Bessel-integral representation."""
    s = q.medium.order
    val = q.time ** (-q.medium.dim / (2.0 * s)) * profile(q.scaled_radius, q.medium)
    if val < -1e-10:
        raise QuadratureError(f"negative kernel density {val} at r={q.radius}, t={q.time}")
    return KernelValue(max(val, 0.0) if val > -1e-10 else val, "bessel_integral")


def heat_kernel_gradient(q: KernelQuery, component: int = 0, point=None):
    """d/dx_j P(x, t; s) via the dimension-shift identity -2 pi x_j P^{N+2}(|x|, t).

    Without ``point`` the query is read as x = radius * e_component; with a
    point (length N) the radius is taken from it and ``component=None``
    returns the full gradient vector.
    """
    n = q.medium.dim
    if point is None:
        if component is None or not 0 <= component < n:
            raise DomainError(f"component must be an axis index in 0..{n - 1}")
        x = np.zeros(n)
        x[component] = q.radius
    else:
        x = np.atleast_1d(np.asarray(point, dtype=float))
        if x.shape != (n,):
            raise DomainError(f"point must have {n} coordinates")
    r = float(np.linalg.norm(x))
    shifted = heat_kernel(KernelQuery(r, q.time, q.medium.shifted(2))).density
    grad = -2.0 * math.pi * x * shifted
    return grad if component is None else float(grad[component])


def kernel_bound_ratio(q: KernelQuery) -> float:
    """P / [t / (t^{1/s} + |x|^2)^{(N+2s)/2}], the two-sided estimate's ratio."""
    n, s = q.medium.dim, q.medium.order
    if not (0 < s < 1):
        raise DomainError("bound ratio is defined for 0 < s < 1")
    ref = q.time / (q.time ** (1.0 / s) + q.radius**2) ** ((n + 2 * s) / 2.0)
    return heat_kernel(q).density / ref


def bound_ratio_sweep(p: MediumParams, radii, times):
    """Min and max of ``kernel_bound_ratio`` over a grid (a report, not a check)."""
    vals = np.array([[kernel_bound_ratio(KernelQuery(r, t, p)) for r in radii] for t in times])
    return float(vals.min()), float(vals.max()), vals


# -- tabulated profile ------------------------------------------------------------


class KernelProfile:
    """Piecewise-Chebyshev table of Phi for fast vectorized kernel evaluation.

    Panels cover [0, r_far]; beyond r_far the large-r expansion is summed
    directly (s < 1) or the Gaussian closed form is used (s = 1).
    """

    degree = 20

    def __init__(self, p: MediumParams):
        self.medium = p
        n, s = p.dim, p.order
        self.edges = np.array([0.0])
        self.r_far = 0.0
        self.coefs = np.zeros((0, self.degree + 1))
        if s == 1.0:
            return
        # graded toward 0, where Phi is smooth but not analytic for s < 1/2
        edges = [0.0] + [0.25 * 2.0**-j for j in range(6, 0, -1)] + list(np.arange(0.25, 2.0, 0.25)) + [2.0]
        r = 2.0
        while r < 200.0:
            r = r * 1.2
            edges.append(r)
            if r > 6.0 and _profile_asymptotic(r, n, s) is not None:
                break
        else:
            raise QuadratureError(f"large-r expansion never converged for N={n}, s={s}")
        self.edges = np.array(edges)
        self.r_far = self.edges[-1]
        nodes = np.cos(np.pi * (np.arange(self.degree + 1) + 0.5) / (self.degree + 1))
        coefs = []
        for a, b in zip(self.edges[:-1], self.edges[1:]):
            rr = 0.5 * (a + b) + 0.5 * (b - a) * nodes
            vals = np.array([profile(x, p) for x in rr])
            coefs.append(C.chebfit(nodes, vals, self.degree))
        self.coefs = np.array(coefs)
        ks, sgn, logmag = asymptotic_coefficients(n, s, kmax=200)
        keep = logmag < 600.0
        self._asym = (ks[keep], sgn[keep], logmag[keep])

    def __call__(self, r):
        """Phi at scaled radii ``r`` (array)."""
        r = np.asarray(r, dtype=float)
        out = np.empty_like(r)
        inside = r < self.edges[-1]
        if np.any(inside):
            ri = r[inside]
            idx = np.clip(np.searchsorted(self.edges, ri, side="right") - 1, 0, len(self.coefs) - 1)
            a, b = self.edges[idx], self.edges[idx + 1]
            x = (2.0 * ri - a - b) / (b - a)
            # Clenshaw per point, vectorized over the panel coefficients
            c = self.coefs[idx]
            b1 = np.zeros_like(x)
            b2 = np.zeros_like(x)
            for j in range(self.degree, 0, -1):
                b1, b2 = c[:, j] + 2.0 * x * b1 - b2, b1
            out[inside] = c[:, 0] + x * b1 - b2
        if np.any(~inside):
            ro = r[~inside]
            if self.medium.order == 1.0:
                out[~inside] = (4.0 * math.pi) ** (-self.medium.dim / 2.0) * np.exp(-ro * ro / 4.0)
            else:
                out[~inside] = self._far(ro)
        return out

    def _far(self, r):
        ks, sgn, logmag = self._asym
        n, alpha = self.medium.dim, 2.0 * self.medium.order
        logr = np.log(r)
        total = np.zeros_like(r)
        for k, sg, lm in zip(ks, sgn, logmag):
            env = np.exp(lm - (k * alpha + n) * logr)
            total += sg * env
            if np.all(env <= 1e-17 * np.abs(total)):
                break
        return total

    def density(self, r, t: float):
        """P(|x| = r, t) for an array of physical radii."""
        s, n = self.medium.order, self.medium.dim
        return t ** (-n / (2.0 * s)) * self(np.asarray(r) * t ** (-1.0 / (2.0 * s)))


@lru_cache(maxsize=32)
def kernel_profile(dim: int, order: float) -> KernelProfile:
    return KernelProfile(MediumParams(dim, order))
