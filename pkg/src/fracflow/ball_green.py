"""Green's function machinery for (-Delta)^s on a ball B_R(0).

G(x, y) = kappa |x-y|^{2s-N} I(r0),  I(r0) = int_0^{r0} t^{s-1} (1+t)^{-N/2} dt,
r0 = (R^2-|x|^2)(R^2-|y|^2) / (R^2 |x-y|^2), with a logarithmic form when N = 2s.

Integral operators on the ball are discretized by a polar Nystrom rule whose
angular nodes are invariant under a finite rotation group. The discrete Green
matrix then commutes with that group, which is what makes the balance law
(vanishing first spherical moment) survive discretization exactly.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate
from scipy.special import eval_jacobi, hyp2f1

from .errors import ContinuationError, DomainError, GeometryError, QuadratureError
from .specfun import (
    MediumParams,
    fundamental_coefficient,
    gamma_fn,
    is_critical_case,
    kappa_constant,
    sphere_area,
)
from .sphere import SphericalQuadrature, icosahedral_quadrature, real_harmonic, spherical_quadrature

MAX_SHIFTS = 8


@dataclass(frozen=True)
class BallSpec:
    radius: float
    medium: MediumParams

    def __post_init__(self):
        if not self.radius > 0:
            raise DomainError("ball radius must be positive")
        self.medium.require_nonlocal()


@dataclass(frozen=True)
class GreenEval:
    value: float
    branch: str  # integral_form | log_form


def _as_point(x, dim):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (dim,):
        raise DomainError(f"expected a point with {dim} coordinates")
    return x


def interaction_ratio(x, y, b: BallSpec) -> float:
    """r0(x, y) = (R^2-|x|^2)(R^2-|y|^2) / (R^2 |x-y|^2)."""
    n = b.medium.dim
    x, y = _as_point(x, n), _as_point(y, n)
    d2 = float(np.sum((x - y) ** 2))
    if d2 == 0.0:
        raise GeometryError("interaction ratio is undefined for coincident points")
    R2 = b.radius**2
    return (R2 - x @ x) * (R2 - y @ y) / (R2 * d2)


# -- inner integral I(r0) -----------------------------------------------------------


def inner_integral_quad(r0: float, p: MediumParams) -> float:
    """I(r0) by adaptive quadrature; t = tau^{1/s} absorbs the t^{s-1} endpoint."""
    n, s = p.dim, p.order
    if r0 <= 0:
        return 0.0
    opts = dict(epsabs=0.0, epsrel=1e-13, limit=200)
    head = min(r0, 1.0)
    # int_0^head t^{s-1}(1+t)^{-n/2} dt with t = tau^{1/s}
    val = integrate.quad(lambda tau: (1.0 + tau ** (1.0 / s)) ** (-n / 2.0) / s, 0.0, head**s, **opts)[0]
    if r0 > 1.0:
        bexp = n / 2.0 - s
        # t = 1/w, then w = sigma^{1/b}: the w^{b-1} factor becomes 1/b
        val += integrate.quad(lambda sig: (1.0 + sig ** (1.0 / bexp)) ** (-n / 2.0), r0 ** (-bexp), 1.0, **opts)[0] / bexp
    return val


def inner_integral(r0, p: MediumParams):
    """Vectorized I(r0) through Gauss hypergeometric functions (N != 2s)."""
    n, s = p.dim, p.order
    r0 = np.asarray(r0, dtype=float)
    a = n / 2.0
    out = np.empty_like(r0)
    lo = r0 <= 1.0
    z = r0[lo]
    out[lo] = z**s / s * hyp2f1(a, s, s + 1.0, -z)
    if np.any(~lo):
        bexp = a - s
        w = 1.0 / r0[~lo]
        head = 1.0 / s * hyp2f1(a, s, s + 1.0, -1.0)
        F1 = hyp2f1(a, bexp, bexp + 1.0, -1.0) / bexp
        Fw = w**bexp / bexp * hyp2f1(a, bexp, bexp + 1.0, -w)
        out[~lo] = head + F1 - Fw
    return out


def _log_form(x, y, R):
    """N = 1, s = 1/2: (1/pi) log((R^2 - xy + sqrt((R^2-x^2)(R^2-y^2))) / (R |x-y|))."""
    num = R * R - x * y + np.sqrt((R * R - x * x) * (R * R - y * y))
    return np.log(num / (R * np.abs(x - y))) / math.pi


def green_ball(x, y, b: BallSpec) -> GreenEval:
    """G(x, y) on B_R(0); zero when either point lies outside the open ball."""
    n = b.medium.dim
    x, y = _as_point(x, n), _as_point(y, n)
    d = float(np.linalg.norm(x - y))
    if d == 0.0:
        raise GeometryError("Green's function is singular at coincident points")
    R = b.radius
    critical = is_critical_case(b.medium)
    branch = "log_form" if critical else "integral_form"
    if x @ x >= R * R or y @ y >= R * R:
        return GreenEval(0.0, branch)
    if critical:
        return GreenEval(float(_log_form(x[0], y[0], R)), branch)
    s = b.medium.order
    r0 = interaction_ratio(x, y, b)
    return GreenEval(kappa_constant(b.medium) * d ** (2 * s - n) * inner_integral_quad(r0, b.medium), branch)


def green_values(X, Y, b: BallSpec):
    """Vectorized G(X_i, Y_i) for broadcastable point arrays (..., N)."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    R = b.radius
    n, s = b.medium.dim, b.medium.order
    x2 = np.sum(X * X, axis=-1)
    y2 = np.sum(Y * Y, axis=-1)
    d2 = np.sum((X - Y) ** 2, axis=-1)
    x2, y2, d2 = np.broadcast_arrays(x2, y2, d2)
    inside = (x2 < R * R) & (y2 < R * R) & (d2 > 0)
    out = np.zeros(d2.shape)
    if is_critical_case(b.medium):
        xb, yb = np.broadcast_arrays(X[..., 0], Y[..., 0])
        out[inside] = _log_form(xb[inside], yb[inside], R)
        return out
    r0 = (R * R - x2[inside]) * (R * R - y2[inside]) / (R * R * d2[inside])
    out[inside] = kappa_constant(b.medium) * d2[inside] ** ((2 * s - n) / 2.0) * inner_integral(r0, b.medium)
    return out


def fundamental_solution(x, p: MediumParams) -> float:
    """Psi(x): the power form, or -(1/pi) log|x| when N = 2s."""
    x = _as_point(x, p.dim)
    r = float(np.linalg.norm(x))
    if r == 0.0:
        raise GeometryError("fundamental solution is singular at the origin")
    if is_critical_case(p):
        return -math.log(r) / math.pi
    return fundamental_coefficient(p) * r ** (2 * p.order - p.dim)


def torsion_function(x, b: BallSpec):
    """int_B G(x, y) dy = Gamma(N/2) / (4^s Gamma(1+s) Gamma(N/2+s)) (R^2-|x|^2)_+^s."""
    n, s = b.medium.dim, b.medium.order
    x = np.asarray(x, dtype=float)
    c = gamma_fn(n / 2.0) / (2.0 ** (2 * s) * gamma_fn(1.0 + s) * gamma_fn(n / 2.0 + s))
    return c * np.clip(b.radius**2 - np.sum(x * x, axis=-1), 0.0, None) ** s


# -- Poisson and mean-value kernels ------------------------------------------------------


def poisson_kernel_ball(x, y, r: float, p: MediumParams) -> float:
    """s-harmonic measure of B_r(0) seen from x, evaluated at an exterior y."""
    p.require_nonlocal()
    n, s = p.dim, p.order
    x, y = _as_point(x, n), _as_point(y, n)
    if x @ x >= r * r:
        raise GeometryError("Poisson kernel needs |x| < r")
    yy = y @ y
    if yy <= r * r:
        return 0.0
    c = gamma_fn(n / 2.0) * math.pi ** (-n / 2.0 - 1.0) * math.sin(math.pi * s)
    return c * ((r * r - x @ x) / (yy - r * r)) ** s * float(np.linalg.norm(x - y)) ** (-n)


def mean_value_constant(p: MediumParams) -> float:
    """c(N, s) giving the mean-value kernel unit mass: Gamma(N/2) sin(pi s) / pi^{N/2+1}."""
    p.require_nonlocal()
    return gamma_fn(p.dim / 2.0) * math.sin(math.pi * p.order) / math.pi ** (p.dim / 2.0 + 1.0)


def mean_value_kernel(y, r: float, p: MediumParams) -> float:
    """A_r(y) = c r^{2s} / ((|y|^2 - r^2)^s |y|^N) outside the closed ball, else 0."""
    y = _as_point(y, p.dim)
    yy = float(y @ y)
    if yy <= r * r:
        return 0.0
    s = p.order
    return mean_value_constant(p) * r ** (2 * s) / ((yy - r * r) ** s * yy ** (p.dim / 2.0))


def _exterior_integral(func, center, rho: float, regular, p: MediumParams, breaks=(), far: float | None = None):
    """int_{|u - center| > rho} regular(t) (t - rho)^{-s} func(u) du,  t = |u - center|.

    The edge singularity is handed to quad as an algebraic weight on the first
    radial panel; ``regular`` must be smooth at t = rho.
    """
    with warnings.catch_warnings():
        # log and power singularities sit on panel ends; quad still converges
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        return _exterior_integral_impl(func, center, rho, regular, p, breaks, far)


def _exterior_integral_impl(func, center, rho, regular, p, breaks, far):
    n, s = p.dim, p.order
    center = _as_point(center, n)
    opts = dict(epsabs=1e-14, epsrel=1e-11, limit=400)
    if n == 1:
        mean = lambda t: func(center + np.array([t])) + func(center - np.array([t]))
        dists = [abs(float(np.ravel(bk)[0]) - center[0]) for bk in breaks]
        hi = far if far is not None else 2.0 * rho
    else:
        q = spherical_quadrature(n, 96)
        mean = lambda t: t ** (n - 1) * float(np.sum(q.weights * func(center[None, :] + t * q.nodes)))
        dists = [float(np.linalg.norm(np.asarray(bk, dtype=float) - center)) for bk in breaks]
        hi = far if far is not None else 4.0 * rho
    pts = sorted({d for d in dists if rho < d < hi})
    edge = rho + 0.5 * ((pts[0] if pts else hi) - rho)
    total = integrate.quad(lambda t: regular(t) * mean(t), rho, edge, weight="alg", wvar=(-s, 0.0), **opts)[0]
    full = lambda t: regular(t) * (t - rho) ** (-s) * mean(t)
    knots = [edge] + pts + [hi]
    for lo_, hi_ in zip(knots[:-1], knots[1:]):
        if hi_ > lo_:
            total += integrate.quad(full, lo_, hi_, **opts)[0]
    if far is None:
        total += integrate.quad(full, hi, np.inf, **opts)[0]
    return total


def s_mean_value(u, x, r: float, p: MediumParams, breaks=()):
    """int_{|z| > r} A_r(z) u(x - z) dz for a callable u of points (..., N)."""
    c = mean_value_constant(p)
    s, n = p.order, p.dim
    x = _as_point(x, n)
    regular = lambda t: c * r ** (2 * s) / ((t + r) ** s * t**n)
    # z = x - u, so |z| = |u - x| and breaks in u-space stay where they are
    return _exterior_integral(lambda pt: u(2.0 * x - pt), x, r, regular, p, breaks=[2.0 * x - np.asarray(bk) for bk in breaks])


def reconstruct_green(x, y, center, rho: float, b: BallSpec):
    """G(x, y) from exterior values of G(., y) against the Poisson kernel of B_rho(center).

    Returns (reconstructed, direct).
    """
    n, s = b.medium.dim, b.medium.order
    x, y, center = _as_point(x, n), _as_point(y, n), _as_point(center, n)
    R = b.radius
    if not (np.linalg.norm(x - center) < rho and np.linalg.norm(center) + rho <= R):
        raise GeometryError("need x in B_rho(center) and B_rho(center) inside the ball")
    if np.linalg.norm(y - center) <= rho:
        raise GeometryError("y must lie outside the closed ball B_rho(center)")
    direct = green_ball(x, y, b).value
    c = gamma_fn(n / 2.0) * math.pi ** (-n / 2.0 - 1.0) * math.sin(math.pi * s)
    xl = x - center
    lead = c * (rho * rho - xl @ xl) ** s

    def integrand(u):
        u = np.asarray(u, dtype=float)
        dist = np.linalg.norm(u - x, axis=-1)
        return green_values(u, y, b) * lead * dist ** (-n)

    regular = lambda t: (t + rho) ** (-s)
    # G(., y) vanishes outside B_R, so the radial range stops at |center| + R
    bks = [y] + ([np.array([-R]), np.array([R])] if n == 1 else [])
    return _exterior_integral(integrand, center, rho, regular, b.medium, breaks=bks, far=np.linalg.norm(center) + R), direct


def green_gradient_origin(y, b: BallSpec):
    """Central differences of green_ball in x at x = 0 (step 1e-5 R)."""
    n = b.medium.dim
    y = _as_point(y, n)
    ry = float(np.linalg.norm(y))
    if not 0 < ry < b.radius:
        raise GeometryError("need 0 < |y| < R")
    h = 1e-5 * b.radius
    g = np.zeros(n)
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        g[j] = (green_ball(e, y, b).value - green_ball(-e, y, b).value) / (2 * h)
    return g


# -- reduced angular integrals ------------------------------------------------------------


def angular_reduction(ghat, rho: float, sigma: float, p: MediumParams, n_nodes: int = 64):
    """Degree-0 and degree-1 reductions of int_S ghat(|rho omega - sigma eta|, rho, sigma) d omega.

    Returns (I0, I1) with I_k = |S^{N-2}| int_{-1}^1 (1-l^2)^{(N-3)/2} l^k ghat(...) dl,
    so that int_S omega ghat d omega = I1 * eta.
    """
    n = p.dim
    if n == 1:
        raise DomainError("N = 1 has no angular reduction; the sphere is two points")
    if n == 2:
        k = np.arange(1, n_nodes + 1)
        lam = np.cos((2 * k - 1) * math.pi / (2 * n_nodes))
        w = np.full(n_nodes, math.pi / n_nodes)
    elif n == 3:
        lam, w = leggauss(n_nodes)
    else:
        raise DomainError("angular reduction implemented for N in {2, 3}")
    dist = np.sqrt(np.maximum(rho * rho + sigma * sigma - 2 * rho * sigma * lam, 0.0))
    vals = np.asarray(ghat(dist, rho, sigma), dtype=float)
    area = sphere_area(n - 1)
    return area * float(np.sum(w * vals)), area * float(np.sum(w * lam * vals))


# -- Nystrom discretization ---------------------------------------------------------------


def _angular_rule(dim: int, n_angular: int | None) -> SphericalQuadrature:
    if dim == 1:
        return spherical_quadrature(1)
    if dim == 2:
        return spherical_quadrature(2, (n_angular or 32) - 1)
    # 62-point icosahedral orbits: the largest group available on S^2
    return icosahedral_quadrature()


def _angular_cells(quad: SphericalQuadrature, n_sub: int):
    """Sub-points and relative weights tiling the angular cell of every node.

    N=2: arcs of width 2 pi / M with Gauss-Legendre sub-nodes. N=3: the
    spherical Voronoi cell, fanned into triangles around its generator, with a
    fully symmetric 3-point rule per triangle. Both constructions commute with
    the symmetry group of the node set.
    """
    n = quad.dim
    if n == 1:
        return quad.nodes[:, None, :], np.ones((quad.size, 1))
    if n == 2:
        m = quad.size
        x, w = leggauss(n_sub)
        th0 = np.arctan2(quad.nodes[:, 1], quad.nodes[:, 0])
        th = th0[:, None] + (math.pi / m) * x[None, :]
        pts = np.stack([np.cos(th), np.sin(th)], axis=-1)
        return pts, np.broadcast_to(0.5 * w, (m, n_sub)).copy()
    from scipy.spatial import SphericalVoronoi

    sv = SphericalVoronoi(quad.nodes)
    sv.sort_vertices_of_regions()
    bary = np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]])
    all_pts, all_w = [], []
    for i, region in enumerate(sv.regions):
        g = quad.nodes[i]
        verts = sv.vertices[region]
        pts, ws = [], []
        for a, b in zip(verts, np.roll(verts, -1, axis=0)):
            tri = np.stack([g, a, b])
            area = 0.5 * np.linalg.norm(np.cross(a - g, b - g))
            q = bary @ tri
            pts.append(q / np.linalg.norm(q, axis=1, keepdims=True))
            ws.append(np.full(3, area / 3.0))
        all_pts.append(np.concatenate(pts))
        all_w.append(np.concatenate(ws))
    size = max(len(p_) for p_ in all_pts)
    P = np.zeros((quad.size, size, 3))
    W = np.zeros((quad.size, size))
    for i, (p_, w_) in enumerate(zip(all_pts, all_w)):
        P[i, : len(p_)] = p_
        P[i, len(p_):] = quad.nodes[i]
        W[i, : len(w_)] = w_ / w_.sum()
    return P, W


@dataclass
class BallNystrom:
    """Polar Nystrom rule on B_R with torsion-function singularity subtraction.

    (G f)(x_a) = sum_b Gbar_ab W_b (f_b - f_a) + f_a T(x_a), T = int_B G(x_a, y) dy.
    Gbar_ab is G(x_a, y_b) for well separated pairs and the average of G(x_a, .)
    over the polar cell of y_b for near pairs, which keeps the self-cell
    remainder T - sum_b Gbar_ab W_b positive.
    """

    ball: BallSpec
    n_radial: int = 24
    n_angular: int | None = None
    near_factor: float = 2.0
    n_sub: int = 6
    quad: SphericalQuadrature = field(init=False)
    nodes: np.ndarray = field(init=False)
    weights: np.ndarray = field(init=False)
    radii: np.ndarray = field(init=False)

    def __post_init__(self):
        n = self.ball.medium.dim
        self.quad = _angular_rule(n, self.n_angular)
        x, w = leggauss(self.n_radial)
        R = self.ball.radius
        self.radii = 0.5 * R * (x + 1.0)
        wr = 0.5 * R * w * self.radii ** (n - 1)
        # radial cell edges at midpoints between nodes
        self._edges = np.concatenate([[0.0], 0.5 * (self.radii[1:] + self.radii[:-1]), [R]])
        self.nodes = (self.radii[:, None, None] * self.quad.nodes[None, :, :]).reshape(-1, n)
        self.weights = (wr[:, None] * self.quad.weights[None, :]).reshape(-1)
        self._matrix = None

    @property
    def size(self) -> int:
        return len(self.weights)

    def _cell_points(self):
        """Sub-points (size, n_sub_total, N) and averaging weights of every polar cell."""
        n = self.ball.medium.dim
        ang_p, ang_w = _angular_cells(self.quad, self.n_sub)
        x, w = leggauss(self.n_sub)
        lo, hi = self._edges[:-1], self._edges[1:]
        rr = 0.5 * (lo + hi)[:, None] + 0.5 * (hi - lo)[:, None] * x[None, :]  # (nr, q)
        rw = w[None, :] * rr ** (n - 1)
        rw = rw / rw.sum(axis=1, keepdims=True)
        pts = rr[:, None, :, None, None] * ang_p[None, :, None, :, :]  # (nr, M, q, A, N)
        wts = rw[:, None, :, None] * ang_w[None, :, None, :]
        nr, M = self.n_radial, self.quad.size
        return pts.reshape(nr * M, -1, n), wts.reshape(nr * M, -1)

    @property
    def matrix(self) -> np.ndarray:
        if self._matrix is None:
            X = self.nodes
            G = green_values(X[:, None, :], X[None, :, :], self.ball)
            np.fill_diagonal(G, 0.0)
            # near pairs: replace point values with cell averages
            nr, M = self.n_radial, self.quad.size
            dr = np.repeat(self._edges[1:] - self._edges[:-1], M)
            ang = math.sqrt(4.0 * math.pi / M) if self.ball.medium.dim == 3 else 2.0 * math.pi / M
            cell = np.maximum(dr, np.repeat(self.radii, M) * ang) if self.ball.medium.dim > 1 else dr
            dist = np.linalg.norm(X[:, None, :] - X[None, :, :], axis=-1)
            # the margin keeps rotated copies of a pair on the same side of the cut
            near = (dist < (1.0 - 1e-9) * self.near_factor * cell[None, :]) & ~np.eye(self.size, dtype=bool)
            ia, ib = np.nonzero(near)
            if len(ia):
                sub_p, sub_w = self._cell_points()
                chunk = 20000
                for k in range(0, len(ia), chunk):
                    a, b = ia[k : k + chunk], ib[k : k + chunk]
                    vals = green_values(X[a][:, None, :], sub_p[b], self.ball)
                    G[a, b] = np.sum(vals * sub_w[b], axis=1)
            K = G * self.weights[None, :]
            T = torsion_function(X, self.ball)
            K[np.diag_indices_from(K)] = T - K.sum(axis=1)
            self._matrix = K
        return self._matrix

    def sample(self, func) -> np.ndarray:
        return np.asarray(func(self.nodes), dtype=float)

    def apply(self, f) -> np.ndarray:
        return self.matrix @ f

    def evaluate(self, x, f_nodes, f_at_x):
        """Nystrom interpolant of G f at arbitrary points x (..., N)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        G = green_values(x[:, None, :], self.nodes[None, :, :], self.ball)
        fx = np.asarray(f_at_x, dtype=float).reshape(-1)
        return (G * self.weights[None, :]) @ f_nodes - fx * (G @ self.weights) + fx * torsion_function(x, self.ball)

    def _grid(self, f):
        return np.asarray(f).reshape(self.n_radial, self.quad.size)

    def balance_profile(self, f) -> np.ndarray:
        """First spherical moment int omega f(rho_i omega) d omega at each node radius."""
        return (self._grid(f) * self.quad.weights[None, :]) @ self.quad.nodes

    def mean_profile(self, f) -> np.ndarray:
        return self._grid(f) @ self.quad.weights

    def l2_norm(self, f) -> float:
        return float(np.sqrt(np.sum(self.weights * np.asarray(f) ** 2)))


def poisson_solve_ball(h, x, b: BallSpec, grid: BallNystrom | None = None):
    """u(x) = int_B G(x, y) h(y) dy for a callable h; x may be an array of points."""
    grid = grid or BallNystrom(b)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    hx = np.asarray(h(x), dtype=float)
    vals = grid.evaluate(x, grid.sample(h), hx)
    if not np.all(np.isfinite(vals)):
        raise QuadratureError("non-finite value in the ball Poisson solve")
    return vals


# -- resolvent by Neumann series ------------------------------------------------------------


@dataclass
class ResolventResult:
    values: np.ndarray  # v_lambda at the grid nodes
    lam: float
    shifts: int
    terms: int
    increments: list


def _neumann_matrix(B: np.ndarray, c: float, k_max: int, tol: float):
    """(I - c B)^{-1} as the Neumann sum sum_k (cB)^k, doubling the number of terms each step.

    Returns None when the powers stop shrinking, i.e. the series diverges.
    """
    n = B.shape[0]
    S = np.eye(n)
    P = c * B
    grow = 0
    prev = np.inf
    terms = 1
    while terms < k_max:
        S = S + P @ S
        terms *= 2
        size = np.linalg.norm(P, 2) if n <= 400 else np.linalg.norm(P, "fro")
        if size < tol:
            return S
        grow = grow + 1 if size >= prev else 0
        if grow >= 3 or not np.isfinite(size):
            return None
        prev = size
        P = P @ P
    return None


def _shifted_operator(K: np.ndarray, lam: float, depth: int, k_max: int, tol: float):
    """Matrix of G_lam = (I + lam K)^{-1} K by nested shifted Neumann series."""
    if lam == 0.0:
        return K, depth
    S = _neumann_matrix(K, -lam, k_max, tol)
    if S is not None:
        return S @ K, depth
    if depth >= MAX_SHIFTS:
        raise ContinuationError(f"no convergence after {MAX_SHIFTS} shifts")
    lam0 = 0.5 * lam
    B, used = _shifted_operator(K, lam0, depth + 1, k_max, tol)
    S = _neumann_matrix(B, lam0 - lam, k_max, tol)
    if S is None:
        raise ContinuationError(f"shifted series diverged at lambda={lam}")
    return S @ B, used


def neumann_resolvent(u0, lam: float, b: BallSpec, k_max: int = 4096, grid: BallNystrom | None = None,
                      tol: float = 1e-10) -> ResolventResult:
    """v = sum_k (-lam)^k G^{k+1} u0, restarted from shifted bases lam/2, lam/4, ... when divergent.

    ``u0`` is a callable of points or a vector of node values.
    """
    if lam < 0:
        raise DomainError("lambda must be non-negative")
    grid = grid or BallNystrom(b)
    f = grid.sample(u0) if callable(u0) else np.asarray(u0, dtype=float)
    K = grid.matrix
    scale = max(np.max(np.abs(f)), 1e-300)

    def series(B, c):
        term = B @ f
        total = term.copy()
        incs = [float(np.max(np.abs(term)))]
        growth = 0
        for k in range(1, k_max):
            term = c * (B @ term)
            total += term
            inc = float(np.max(np.abs(term)))
            growth = growth + 1 if inc > incs[-1] else 0
            incs.append(inc)
            if inc < tol * scale:
                return total, k + 1, incs
            if growth >= 3 or not np.isfinite(inc):
                return None, k + 1, incs
        return None, k_max, incs

    if lam == 0.0:
        v = K @ f
        return ResolventResult(v, 0.0, 0, 1, [float(np.max(np.abs(v)))])
    v, k, incs = series(K, -lam)
    if v is not None:
        return ResolventResult(v, lam, 0, k, incs)
    lam0 = 0.5 * lam
    B, depth = _shifted_operator(K, lam0, 1, k_max, tol)
    v, k, incs = series(B, lam0 - lam)
    if v is None:
        raise ContinuationError(f"shifted Neumann series diverged at lambda={lam}")
    return ResolventResult(v, lam, depth, k, incs)


# -- exact eigenpairs ------------------------------------------------------------------------


def ball_eigenpair(p: MediumParams, n: int, ell: int, m: int = 0):
    """Exact pair for (-Delta)^s on the unit ball with zero exterior values.

    (-Delta)^s [(1-|x|^2)_+^s P_n^{(s, ell+N/2-1)}(2|x|^2-1) r^ell Y] = mu P_n(...) r^ell Y
    with mu = 4^s Gamma(1+s+n) Gamma(N/2+s+n+ell) / (n! Gamma(N/2+n+ell)).
    Returns (u, h, mu) where u is the solution and h the right-hand side, both callables.
    """
    N, s = p.dim, p.order
    beta = ell + N / 2.0 - 1.0
    mu = 2.0 ** (2 * s) * gamma_fn(1 + s + n) * gamma_fn(N / 2.0 + s + n + ell) / (
        math.factorial(n) * gamma_fn(N / 2.0 + n + ell)
    )

    def angular(pts):
        r = np.linalg.norm(pts, axis=-1)
        safe = np.where(r > 0, r, 1.0)
        om = pts / safe[..., None]
        return r**ell * real_harmonic(N, ell, m, om)

    def h(pts):
        pts = np.asarray(pts, dtype=float)
        r2 = np.sum(pts * pts, axis=-1)
        return eval_jacobi(n, s, beta, 2.0 * r2 - 1.0) * angular(pts)

    def u(pts):
        pts = np.asarray(pts, dtype=float)
        r2 = np.sum(pts * pts, axis=-1)
        return np.clip(1.0 - r2, 0.0, None) ** s * h(pts)

    return u, h, mu
