import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from fracflow.ball_green import (
    BallNystrom,
    BallSpec,
    angular_reduction,
    ball_eigenpair,
    fundamental_solution,
    green_ball,
    green_gradient_origin,
    green_values,
    inner_integral,
    inner_integral_quad,
    interaction_ratio,
    mean_value_kernel,
    neumann_resolvent,
    poisson_kernel_ball,
    poisson_solve_ball,
    reconstruct_green,
    s_mean_value,
    torsion_function,
)
from fracflow.errors import DomainError, GeometryError
from fracflow.lattice import assemble_operator, build_domain, consistency_tolerance
from fracflow.specfun import MediumParams
from fracflow.sphere import real_harmonic, spherical_quadrature

from oracles import GREEN, LOG_GREEN_VALUE


def ball(n, s, R=1.0):
    return BallSpec(R, MediumParams(n, s))


def random_inside(rng, n, R=1.0, rmax=0.95):
    v = rng.normal(size=n)
    return v / np.linalg.norm(v) * R * rmax * rng.uniform() ** (1.0 / n)


# -- interaction ratio and G ----------------------------------------------------------------------


def test_interaction_ratio_examples():
    b = ball(2, 0.5)
    assert interaction_ratio([0.0, 0.0], [0.5, 0.0], b) == pytest.approx(3.0, rel=1e-15)
    x, y = np.array([0.1, 0.3]), np.array([-0.4, 0.2])
    assert interaction_ratio(x, y, b) == interaction_ratio(y, x, b)
    assert interaction_ratio(x, [1.0 - 1e-9, 0.0], b) < 1e-8
    with pytest.raises(GeometryError):
        interaction_ratio(x, x, b)


def test_log_branch_example():
    ev = green_ball([0.0], [0.5], ball(1, 0.5))
    assert ev.branch == "log_form"
    assert ev.value == pytest.approx(LOG_GREEN_VALUE, rel=1e-12)
    assert LOG_GREEN_VALUE == pytest.approx(math.log(2 + math.sqrt(3)) / math.pi, rel=1e-15)


@pytest.mark.parametrize("n, s, x, y, expected", GREEN)
def test_green_against_frozen_oracle(n, s, x, y, expected):
    ev = green_ball(x, y, ball(n, s))
    assert ev.branch == "integral_form"
    assert ev.value == pytest.approx(expected, rel=1e-10)


@given(st.floats(1e-6, 1e3), st.sampled_from([0.3, 0.5, 0.75]), st.integers(1, 3))
def test_inner_integral_closed_form_matches_quadrature(r0, s, n):
    p = MediumParams(n, s)
    if 2 * s == n:
        return
    assert float(inner_integral(np.array([r0]), p)[0]) == pytest.approx(inner_integral_quad(r0, p), rel=1e-10)


@pytest.mark.parametrize("n, s", [(1, 0.3), (1, 0.5), (2, 0.5), (2, 0.75), (3, 0.5)])
def test_green_symmetric_and_positive(n, s):
    b = ball(n, s)
    rng = np.random.default_rng(n * 7 + int(10 * s))
    for _ in range(100):
        x, y = random_inside(rng, n), random_inside(rng, n)
        gxy, gyx = green_ball(x, y, b).value, green_ball(y, x, b).value
        assert gxy > 0
        assert gxy == pytest.approx(gyx, rel=1e-12)


@pytest.mark.parametrize("n, s", [(1, 0.5), (2, 0.75), (3, 0.5)])
def test_green_vanishes_at_boundary(n, s):
    b = ball(n, s)
    x = np.full(n, 0.1)
    ray = np.zeros(n)
    ray[0] = -1.0
    ts = 1.0 - np.geomspace(1e-1, 1e-8, 40)
    vals = np.array([green_ball(x, t * ray, b).value for t in ts])
    assert np.all(np.diff(vals[-10:]) < 0)
    assert vals[-1] < 1e-3 * vals[0]
    assert green_values(x, 1.2 * ray, b) == 0.0


def test_green_rejects_coincident_points():
    with pytest.raises(GeometryError):
        green_ball([0.2, 0.1], [0.2, 0.1], ball(2, 0.5))


def test_green_vectorized_matches_scalar():
    b = ball(2, 0.75)
    rng = np.random.default_rng(4)
    X = np.array([random_inside(rng, 2) for _ in range(30)])
    Y = np.array([random_inside(rng, 2) for _ in range(30)])
    scalar = [green_ball(x, y, b).value for x, y in zip(X, Y)]
    assert np.allclose(green_values(X, Y, b), scalar, rtol=1e-12, atol=0)


# -- fundamental solution ------------------------------------------------------------------------


def test_fundamental_solution_examples():
    assert fundamental_solution([1.0], MediumParams(1, 0.5)) == 0.0
    assert fundamental_solution([0.0, 0.0, 1.0], MediumParams(3, 0.5)) == pytest.approx(1 / (2 * math.pi**2), rel=1e-13)
    with pytest.raises(GeometryError):
        fundamental_solution([0.0], MediumParams(1, 0.5))


@pytest.mark.parametrize("n, s", [(1, 0.5), (2, 0.75), (3, 0.5)])
def test_green_minus_fundamental_is_bounded(n, s):
    b = ball(n, s)
    p = b.medium
    x = np.zeros(n)
    x[0] = 0.1
    e = np.ones(n) / math.sqrt(n)

    def diff(eps):
        return abs(green_ball(x, x + eps * e, b).value - fundamental_solution(eps * e, p))

    ref = diff(1e-2)
    assert diff(1e-3) < 10 * ref and diff(1e-4) < 10 * ref


# -- Poisson and mean-value kernels ---------------------------------------------------------------


def test_poisson_kernel_zero_inside():
    p = MediumParams(2, 0.5)
    assert poisson_kernel_ball([0.1, 0.0], [0.3, 0.4], 0.5, p) == 0.0
    assert poisson_kernel_ball([0.1, 0.0], [0.0, 0.5], 0.5, p) == 0.0


@pytest.mark.parametrize("x", [0.0, 0.3, -0.7])
def test_poisson_kernel_unit_mass_1d(x):
    p = MediumParams(1, 0.5)
    f = lambda y: poisson_kernel_ball([x], [y], 1.0, p)
    g = lambda y: f(y) * (abs(y) - 1.0) ** 0.5  # the weight carries the edge singularity
    mass = sum(
        integrate.quad(g, a, c, weight="alg", wvar=wv, epsabs=1e-13, limit=200)[0]
        for a, c, wv in [(1.0, 2.0, (-0.5, 0)), (-2.0, -1.0, (0, -0.5))]
    )
    mass += sum(integrate.quad(f, a, c, epsabs=1e-13, limit=200)[0] for a, c in [(2.0, np.inf), (-np.inf, -2.0)])
    assert mass == pytest.approx(1.0, abs=1e-6)


def test_poisson_kernel_radial_from_centre():
    p = MediumParams(2, 0.75)
    y1, y2 = np.array([1.5, 0.0]), np.array([0.0, -1.5])
    assert poisson_kernel_ball([0.0, 0.0], y1, 1.0, p) == pytest.approx(poisson_kernel_ball([0.0, 0.0], y2, 1.0, p), rel=1e-15)


@pytest.mark.parametrize("n, s", [(1, 0.3), (1, 0.5), (2, 0.5), (2, 0.75), (3, 0.5)])
def test_mean_value_kernel_unit_mass(n, s):
    p = MediumParams(n, s)
    r = 0.7
    area = 2 * math.pi ** (n / 2) / math.gamma(n / 2)
    radial = lambda t: mean_value_kernel(np.r_[t, np.zeros(n - 1)], r, p) * t ** (n - 1)
    # t = r + w^{1/(1-s)} absorbs the (t-r)^{-s} edge singularity
    edge = lambda w: radial(r + w ** (1 / (1 - s))) * w ** (s / (1 - s)) / (1 - s)
    mass = integrate.quad(edge, 0.0, r ** (1 - s), epsabs=1e-14, limit=200)[0]
    mass += integrate.quad(radial, 2 * r, np.inf, epsabs=1e-14)[0]
    assert area * mass == pytest.approx(1.0, abs=1e-8)
    assert mean_value_kernel(np.full(n, 0.3 * r / math.sqrt(n)), r, p) == 0.0


def test_mean_value_of_fundamental_solution():
    p = MediumParams(1, 0.3)
    z = np.array([1.4])
    u = lambda pts: np.array([fundamental_solution(np.atleast_1d(q) - z, p) for q in np.atleast_2d(pts)]).reshape(np.shape(pts)[:-1])
    center = np.array([0.1])
    got = s_mean_value(u, center, 0.5, p, breaks=[z])
    assert got == pytest.approx(fundamental_solution(center - z, p), rel=1e-5)


@pytest.mark.parametrize("s", [0.3, 0.5, 0.75])
def test_green_has_mean_value_property(s):
    b = ball(1, s)
    y = np.array([0.6])
    u = lambda pts: green_values(np.asarray(pts, dtype=float), y, b)
    for center, r in [(np.array([-0.3]), 0.4), (np.array([0.0]), 0.3)]:
        got = s_mean_value(u, center, r, b.medium, breaks=[y, np.array([-1.0]), np.array([1.0])])
        assert got == pytest.approx(green_ball(center, y, b).value, rel=1e-5)


# -- reconstruction ------------------------------------------------------------------------------------


def test_reconstruction_on_random_configurations():
    b = ball(1, 0.5)
    rng = np.random.default_rng(11)
    done = 0
    while done < 20:
        c = rng.uniform(-0.4, 0.4)
        rho = rng.uniform(0.1, 1.0 - abs(c))
        x = c + rng.uniform(-0.9, 0.9) * rho
        y = rng.uniform(-0.95, 0.95)
        if abs(y - c) <= 1.05 * rho:
            continue
        rec, direct = reconstruct_green([x], [y], [c], rho, b)
        assert rec == pytest.approx(direct, rel=1e-4)
        done += 1


def test_reconstruction_small_ball_and_outside():
    b = ball(1, 0.5)
    rec, direct = reconstruct_green([0.1], [0.5], [0.1], 1e-3, b)
    assert rec == pytest.approx(direct, rel=1e-6)
    rec, direct = reconstruct_green([0.0], [1.5], [0.0], 0.5, b)
    assert rec == 0.0 and direct == 0.0
    with pytest.raises(GeometryError):
        reconstruct_green([0.0], [0.2], [0.0], 0.5, b)


# -- gradient at the origin --------------------------------------------------------------------------------


@pytest.mark.parametrize("n, s", [(1, 0.5), (2, 0.75), (3, 0.5)])
def test_green_gradient_direction_and_sign(n, s):
    b = ball(n, s)
    rng = np.random.default_rng(n)
    w = rng.normal(size=n)
    w /= np.linalg.norm(w)
    signs = []
    for r in np.linspace(0.05, 0.5, 10):
        g = green_gradient_origin(r * w, b)
        cosang = abs(g @ w) / np.linalg.norm(g)
        assert math.acos(min(cosang, 1.0)) < 1e-6
        signs.append(np.sign(g @ w))
    assert len(set(signs)) == 1


@pytest.mark.parametrize("n, s", [(1, 0.5), (2, 0.75), (3, 0.5), (1, 0.3)])
def test_green_gradient_power_law(n, s):
    b = ball(n, s)
    e = np.zeros(n)
    e[0] = 1.0
    rs = np.geomspace(1e-3, 1e-2, 6)
    mags = [np.linalg.norm(green_gradient_origin(r * e, b)) for r in rs]
    slope = np.polyfit(np.log(rs), np.log(mags), 1)[0]
    assert slope == pytest.approx(2 * s - n - 1, abs=0.05)


# -- angular reduction -----------------------------------------------------------------------------------


def test_angular_reduction_examples():
    p3 = MediumParams(3, 0.5)
    const = lambda d, rho, sig: np.ones_like(d)
    I0, I1 = angular_reduction(const, 0.3, 0.6, p3)
    assert I0 == pytest.approx(4 * math.pi, rel=1e-14)
    assert abs(I1) < 1e-14
    I0, I1 = angular_reduction(const, 0.3, 0.6, MediumParams(2, 0.5))
    assert I0 == pytest.approx(2 * math.pi, rel=1e-14)
    assert abs(I1) < 1e-14
    with pytest.raises(DomainError):
        angular_reduction(const, 0.3, 0.6, MediumParams(1, 0.5))


@pytest.mark.parametrize("n", [2, 3])
@settings(max_examples=15)
@given(st.lists(st.floats(-2, 2), min_size=3, max_size=3), st.floats(0.1, 0.4), st.floats(0.6, 0.9))
def test_angular_reduction_matches_full_quadrature(n, coef, rho, sigma):
    a, bb, c = coef
    ghat = lambda d, rho_, sig_: a + bb * d**2 + c * np.exp(-d)
    p = MediumParams(n, 0.5)
    q = spherical_quadrature(n, 40)
    eta = np.zeros(n)
    eta[-1] = 1.0
    d = np.linalg.norm(rho * q.nodes - sigma * eta[None, :], axis=1)
    full = (q.weights * ghat(d, rho, sigma)) @ q.nodes
    _, I1 = angular_reduction(ghat, rho, sigma, p)
    assert np.allclose(full, I1 * eta, atol=1e-8)


# -- Nystrom solves -------------------------------------------------------------------------------------------


def test_torsion_function_matches_poisson_solve():
    b = ball(1, 0.5)
    grid = BallNystrom(b, n_radial=64)
    x = np.array([[0.0], [0.4], [-0.8]])
    vals = poisson_solve_ball(lambda pts: np.ones(len(pts)), x, b, grid)
    assert np.allclose(vals, torsion_function(x, b), rtol=1e-12)


@pytest.mark.parametrize("s", [0.3, 0.5, 0.75])
def test_poisson_solve_exact_pair_1d(s):
    p = MediumParams(1, s)
    b = BallSpec(1.0, p)
    grid = BallNystrom(b, n_radial=128)
    for deg, ell in [(0, 0), (1, 0), (1, 1)]:
        u, h, mu = ball_eigenpair(p, deg, ell)
        x = np.linspace(-0.9, 0.9, 9)[:, None]
        got = poisson_solve_ball(h, x, b, grid)
        assert np.max(np.abs(got - u(x) / mu)) < 1e-3


def test_poisson_solve_positive_and_linear():
    b = ball(2, 0.75)
    grid = BallNystrom(b, n_radial=12, n_angular=16)
    x = np.array([[0.0, 0.0], [0.3, -0.2], [-0.6, 0.5]])
    h1 = lambda pts: np.exp(-8 * np.sum((pts - 0.2) ** 2, axis=-1))
    h2 = lambda pts: np.cos(3 * pts[..., 0]) * pts[..., 1]
    v1 = poisson_solve_ball(h1, x, b, grid)
    assert np.all(v1 > 0)
    v2 = poisson_solve_ball(h2, x, b, grid)
    v12 = poisson_solve_ball(lambda pts: 2.0 * h1(pts) - 3.0 * h2(pts), x, b, grid)
    assert np.allclose(v12, 2 * v1 - 3 * v2, rtol=0, atol=1e-12)


@pytest.mark.parametrize("h", [1 / 32, 1 / 64])
def test_lattice_operator_inverts_poisson_solve(h):
    p = MediumParams(1, 0.5)
    b = BallSpec(1.0, p)
    grid = BallNystrom(b, n_radial=256)
    _, rhs, _ = ball_eigenpair(p, 1, 0)
    d = build_domain("ball", h, dim=1)
    A = assemble_operator(d, p)
    X = d.coords
    resid = A.matrix @ poisson_solve_ball(rhs, X, b, grid) - rhs(X)
    interior = np.abs(X[:, 0]) <= 0.5
    assert np.max(np.abs(resid[interior])) <= consistency_tolerance(h, p) * np.max(np.abs(rhs(X)))


def balanced_datum(n, rng):
    """Random combination of radial profiles times harmonics of degree != 1."""
    terms = []
    for ell in (0, 2, 3):
        ms = [ell] if n == 2 else range(-ell, ell + 1)
        for m in ms:
            terms.append((ell, m, rng.normal(), rng.uniform(1, 4)))

    def u0(pts):
        r = np.linalg.norm(pts, axis=-1)
        om = pts / np.where(r > 0, r, 1.0)[..., None]
        out = np.zeros(r.shape)
        for ell, m, a, k in terms:
            out += a * np.exp(-k * r * r) * r**ell * real_harmonic(n, ell, m, om)
        return out

    return u0


@pytest.mark.parametrize("n", [2, 3])
@pytest.mark.parametrize("s", [0.5, 0.75])
def test_green_operator_preserves_balance(n, s):
    b = ball(n, s)
    grid = BallNystrom(b, n_radial=10) if n == 3 else BallNystrom(b, n_radial=12, n_angular=24)
    rng = np.random.default_rng(n + int(100 * s))
    for _ in range(10):
        f = grid.sample(balanced_datum(n, rng))
        sup = np.max(np.abs(f))
        assert np.max(np.abs(grid.balance_profile(f))) <= 1e-12 * sup
        Gf = grid.apply(f)
        assert np.max(np.abs(grid.balance_profile(Gf))) <= 1e-8 * sup


# -- resolvent ---------------------------------------------------------------------------------------------------


@pytest.fixture(scope="module")
def grid1d():
    return BallNystrom(ball(1, 0.5), n_radial=64)


def test_resolvent_at_zero_is_green_application(grid1d):
    f = grid1d.sample(lambda x: np.cos(2 * x[..., 0]))
    res = neumann_resolvent(f, 0.0, grid1d.ball, grid=grid1d)
    assert res.terms == 1
    assert np.array_equal(res.values, grid1d.matrix @ f)
    with pytest.raises(DomainError):
        neumann_resolvent(f, -1.0, grid1d.ball, grid=grid1d)


@pytest.mark.parametrize("lam", [0.5, 2.0, 8.0, 40.0])
def test_resolvent_solves_shifted_problem(grid1d, lam):
    f = grid1d.sample(lambda x: np.exp(-4 * x[..., 0] ** 2) + x[..., 0])
    res = neumann_resolvent(f, lam, grid1d.ball, grid=grid1d)
    K = grid1d.matrix
    # v + lam G v = G f is the discrete form of (-Delta)^s v + lam v = f
    resid = res.values + lam * K @ res.values - K @ f
    assert np.max(np.abs(resid)) < 1e-8 * np.max(np.abs(f))
    direct = np.linalg.solve(np.eye(len(f)) + lam * K, K @ f)
    assert np.allclose(res.values, direct, rtol=0, atol=1e-9)
    if lam >= 8.0:
        assert res.shifts >= 1


def test_resolvent_pde_residual_on_lattice():
    p = MediumParams(1, 0.5)
    b = BallSpec(1.0, p)
    grid = BallNystrom(b, n_radial=256)
    _, rhs, _ = ball_eigenpair(p, 0, 0)
    lam = 1.5
    v = neumann_resolvent(rhs, lam, b, grid=grid).values
    h = 1 / 32
    d = build_domain("ball", h, dim=1)
    X = d.coords
    # v = G(f - lam v) off the nodes: the Nystrom interpolant is affine in v(x)
    a = grid.evaluate(X, grid.sample(rhs) - lam * v, rhs(X))
    c = grid.evaluate(X, np.zeros(grid.size), np.ones(len(X)))
    vx = a / (1.0 + lam * c)
    resid = assemble_operator(d, p).matrix @ vx + lam * vx - rhs(X)
    interior = np.abs(X[:, 0]) <= 0.5
    assert np.max(np.abs(resid[interior])) <= consistency_tolerance(h, p) * np.max(np.abs(rhs(X)))


def test_resolvent_norm_nonincreasing(grid1d):
    f = grid1d.sample(lambda x: 1.0 - x[..., 0] ** 2 + 0.3 * np.sin(5 * x[..., 0]))
    norms = [grid1d.l2_norm(neumann_resolvent(f, lam, grid1d.ball, grid=grid1d).values) for lam in [0, 0.25, 0.5, 1, 2, 4, 8, 16, 64]]
    assert all(a >= b - 1e-14 for a, b in zip(norms[:-1], norms[1:]))


@pytest.mark.parametrize("n", [2, 3])
def test_resolvent_preserves_balance(n):
    b = ball(n, 0.75)
    grid = BallNystrom(b, n_radial=10) if n == 3 else BallNystrom(b, n_radial=12, n_angular=24)
    f = grid.sample(balanced_datum(n, np.random.default_rng(n)))
    for lam in (0.5, 4.0, 30.0):
        v = neumann_resolvent(f, lam, b, grid=grid).values
        assert np.max(np.abs(grid.balance_profile(v))) <= 1e-8 * np.max(np.abs(f))


@pytest.mark.parametrize("n, s", [(2, 0.5), (2, 0.75)])
def test_nystrom_accuracy_on_exact_pairs(n, s):
    p = MediumParams(n, s)
    b = BallSpec(1.0, p)
    grid = BallNystrom(b)
    u, h, mu = ball_eigenpair(p, 1, 1, 1)
    got = grid.apply(grid.sample(h))
    exact = grid.sample(u) / mu
    assert np.max(np.abs(got - exact)) <= 2e-2 * np.max(np.abs(exact))
