"""Special functions and normalization constants.

Everything here is self-contained (no scipy) so the constants used by the
kernel, Green's function and lattice modules come from one audited place.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

# Lanczos approximation, g = 7, 9 terms. Relative error below 2e-15 on the
# positive axis once combined with the reflection formula for x < 1/2.
_LANCZOS_G = 7.0
_LANCZOS_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)

# Above this argument the ascending Bessel series loses too many digits to
# cancellation; half-integer orders switch to elementary closed forms and
# integer orders to the Hankel asymptotic expansion.
BESSEL_SWITCH = 15.0
ADMISSIBLE_ORDERS = (-0.5, 0.0, 0.5, 1.0, 1.5)


@dataclass(frozen=True)
class MediumParams:
    """Ambient dimension ``dim`` and fractional order ``order`` of (-Delta)^s."""

    dim: int
    order: float

    def __post_init__(self):
        if self.dim not in (1, 2, 3, 4, 5):
            raise DomainError(f"dimension must be in 1..5, got {self.dim}")
        if not (0.0 < self.order <= 1.0):
            raise DomainError(f"order s must satisfy 0 < s <= 1, got {self.order}")

    @property
    def is_local(self) -> bool:
        return self.order == 1.0

    def require_nonlocal(self) -> "MediumParams":
        if not (0.0 < self.order < 1.0):
            raise DomainError(f"nonlocal operator needs 0 < s < 1, got s={self.order}")
        return self

    def shifted(self, by: int = 2) -> "MediumParams":
        return MediumParams(self.dim + by, self.order)


def _lanczos_sum(x):
    x = x - 1.0
    acc = _LANCZOS_COEF[0]
    for i, c in enumerate(_LANCZOS_COEF[1:], start=1):
        acc = acc + c / (x + i)
    return x, acc


def gamma_fn(x):
    """Gamma function for positive real ``x`` (scalar or array)."""
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0.0)):
        raise DomainError("gamma_fn is defined here for x > 0 only")
    small = arr < 0.5
    # reflection: Gamma(x) Gamma(1-x) = pi / sin(pi x)
    z = np.where(small, 1.0 - arr, arr)
    zz, acc = _lanczos_sum(z)
    t = zz + _LANCZOS_G + 0.5
    g = math.sqrt(2.0 * math.pi) * t ** (zz + 0.5) * np.exp(-t) * acc
    out = np.where(small, math.pi / (np.sin(math.pi * arr) * g), g)
    return float(out) if out.ndim == 0 else out


def log_gamma(x):
    """Natural log of Gamma for positive ``x``; safe well beyond overflow of gamma_fn."""
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0.0)):
        raise DomainError("log_gamma is defined here for x > 0 only")
    small = arr < 0.5
    z = np.where(small, 1.0 - arr, arr)
    zz, acc = _lanczos_sum(z)
    t = zz + _LANCZOS_G + 0.5
    lg = _HALF_LOG_2PI + (zz + 0.5) * np.log(t) - t + np.log(acc)
    out = np.where(small, math.log(math.pi) - np.log(np.abs(np.sin(math.pi * arr))) - lg, lg)
    return float(out) if out.ndim == 0 else out


def sphere_area(dim: int) -> float:
    """Surface measure of the unit sphere S^{dim-1}; S^0 = {-1, 1} has measure 2."""
    return 2.0 * math.pi ** (dim / 2.0) / gamma_fn(dim / 2.0)


# -- Bessel functions of order in {-1/2, 0, 1/2, 1, 3/2} ------------------------


def _check_order(nu):
    if not any(abs(nu - o) < 1e-14 for o in ADMISSIBLE_ORDERS):
        raise DomainError(f"Bessel order {nu} not supported; use one of {ADMISSIBLE_ORDERS}")


def bessel_series_scaled(nu: float, z):
    """Entire part of the ascending series: J_nu(z) / (z/2)^nu.

    Terms are summed until they fall below machine precision relative to the
    largest term seen, which is the round-off floor of the alternating sum.
    """
    z = np.asarray(z, dtype=float)
    q = -0.25 * z * z
    term = np.full_like(z, 1.0 / gamma_fn(nu + 1.0)) if nu + 1.0 > 0 else None
    total = term.copy()
    peak = np.abs(term)
    k = 0
    while True:
        k += 1
        term = term * q / (k * (k + nu))
        total = total + term
        a = np.abs(term)
        peak = np.maximum(peak, a)
        if np.all(a <= 1e-17 * peak) or k > 400:
            break
    return total


def _hankel_large(nu: float, z):
    """Hankel asymptotic expansion of J_nu(z) for large positive z."""
    mu = 4.0 * nu * nu
    p = np.ones_like(z)
    q = np.zeros_like(z)
    a = np.ones_like(z)  # a_k(nu) / z^k, built recursively
    prev = np.full_like(z, np.inf)
    done = np.zeros(z.shape, dtype=bool)
    for k in range(1, 60):
        a = a * (mu - (2 * k - 1) ** 2) / (k * 8.0 * z)
        mag = np.abs(a)
        # stop each entry at its smallest term (asymptotic series)
        done |= mag > prev
        upd = np.where(done, 0.0, a)
        sign = -1.0 if (k // 2) % 2 else 1.0
        if k % 2:
            q = q + sign * upd
        else:
            p = p + sign * upd
        prev = np.where(done, prev, mag)
        if np.all(done | (mag < 1e-17)):
            break
    chi = z - (0.5 * nu + 0.25) * math.pi
    return np.sqrt(2.0 / (math.pi * z)) * (p * np.cos(chi) - q * np.sin(chi))


def _bessel_large(nu: float, z):
    root = np.sqrt(2.0 / (math.pi * z))
    if nu == -0.5:
        return root * np.cos(z)
    if nu == 0.5:
        return root * np.sin(z)
    if nu == 1.5:
        return root * (np.sin(z) / z - np.cos(z))
    return _hankel_large(nu, z)


def bessel_j(order: float, z):
    """Bessel function of the first kind J_order(z) for z >= 0.

    Ascending series up to ``BESSEL_SWITCH``, closed forms (half-integer
    orders) or Hankel asymptotics (integer orders) beyond it.
    """
    _check_order(order)
    zz = np.asarray(z, dtype=float)
    if np.any(zz < 0):
        raise DomainError("bessel_j requires z >= 0")
    out = np.empty_like(zz)
    lo = zz <= BESSEL_SWITCH
    if np.any(lo):
        zl = zz[lo]
        with np.errstate(divide="ignore"):
            out[lo] = (0.5 * zl) ** order * bessel_series_scaled(order, zl)
    if np.any(~lo):
        out[~lo] = _bessel_large(order, zz[~lo])
    return float(out) if out.ndim == 0 else out


def bessel_j_scaled(order: float, z):
    """J_order(z) / (z/2)^order, regular at z = 0 for every admissible order."""
    _check_order(order)
    zz = np.asarray(z, dtype=float)
    out = np.empty_like(zz)
    lo = zz <= BESSEL_SWITCH
    if np.any(lo):
        out[lo] = bessel_series_scaled(order, zz[lo])
    if np.any(~lo):
        zh = zz[~lo]
        out[~lo] = _bessel_large(order, zh) * (2.0 / zh) ** order
    return float(out) if out.ndim == 0 else out


def bessel_zero_estimate(order: float, k):
    """McMahon estimate of the k-th positive zero of J_order (k >= 1).

    Exact for orders +-1/2; for the others the error is well below the zero
    spacing, which is all the lobe-splitting quadrature needs.
    """
    k = np.asarray(k, dtype=float)
    beta = (k + 0.5 * order - 0.25) * math.pi
    mu = 4.0 * order * order
    return beta - (mu - 1.0) / (8.0 * beta) - 4.0 * (mu - 1.0) * (7.0 * mu - 31.0) / (3.0 * (8.0 * beta) ** 3)


# -- normalization constants --------------------------------------------------


def frac_lap_constant(p: MediumParams) -> float:
    """c_{N,s} in the singular-integral definition of (-Delta)^s."""
    n, s = p.dim, p.order
    if not (0.0 < s < 1.0):
        raise DomainError("c_{N,s} is defined for 0 < s < 1")
    return 2.0 ** (2 * s) * s * gamma_fn((n + 2 * s) / 2.0) / (math.pi ** (n / 2.0) * gamma_fn(1.0 - s))


def poisson_constant(dim: int) -> float:
    """Normalization of the s = 1/2 kernel, Gamma((N+1)/2) / pi^((N+1)/2)."""
    if dim < 1:
        raise DomainError("dimension must be positive")
    return gamma_fn((dim + 1) / 2.0) / math.pi ** ((dim + 1) / 2.0)


def is_critical_case(p: MediumParams) -> bool:
    return abs(p.dim - 2.0 * p.order) < 1e-14


def kappa_constant(p: MediumParams) -> float:
    """Prefactor of the ball Green's function; 1/pi in the N = 2s case."""
    n, s = p.dim, p.order
    if is_critical_case(p):
        return 1.0 / math.pi
    return gamma_fn(n / 2.0) / (2.0 ** (2 * s) * math.pi ** (n / 2.0) * gamma_fn(s) ** 2)


def fundamental_coefficient(p: MediumParams) -> float:
    """Coefficient of |x|^{2s-N} in the fundamental solution (negative when N < 2s)."""
    n, s = p.dim, p.order
    if is_critical_case(p):
        raise DomainError("N = 2s has a logarithmic fundamental solution")
    a = n / 2.0 - s
    # N < 2s only happens for N = 1, where -1 < a < 0
    g = gamma_fn(a) if a > 0 else gamma_fn(a + 1.0) / a
    return g / (2.0 ** (2 * s) * math.pi ** (n / 2.0) * gamma_fn(s))


def log_mellin_moment(p: MediumParams, k: int, shift: int) -> float:
    """log of int_0^inf exp(-(2 pi rho)^{2s}) rho^m d rho, m = N+1+2k or N-1+2k."""
    if shift not in (0, 2):
        raise DomainError("shift must be 0 or 2")
    if k < 0:
        raise DomainError("k must be non-negative")
    m = p.dim - 1 + 2 * k + shift
    a = (m + 1) / (2.0 * p.order)
    # substitution t = (2 pi rho)^{2s}
    return -(m + 1) * math.log(2.0 * math.pi) + log_gamma(a) - math.log(2.0 * p.order)


def mellin_moment(p: MediumParams, k: int, shift: int) -> float:
    return math.exp(log_mellin_moment(p, k, shift))


@dataclass(frozen=True)
class Constants:
    cNs: float
    cN: float
    kappa: float
    psi_coeff: float


def medium_constants(p: MediumParams) -> Constants:
    """All normalization constants for an admissible (N, s) with 0 < s < 1."""
    p.require_nonlocal()
    psi = 1.0 / math.pi if is_critical_case(p) else fundamental_coefficient(p)
    return Constants(
        cNs=frac_lap_constant(p),
        cN=poisson_constant(p.dim),
        kappa=kappa_constant(p),
        psi_coeff=psi,
    )
