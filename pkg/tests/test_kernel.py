import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from fracflow.errors import DomainError
from fracflow.kernel import (
    KernelQuery,
    bound_ratio_sweep,
    heat_kernel,
    heat_kernel_closed_form,
    heat_kernel_gradient,
    kernel_bound_ratio,
    kernel_profile,
    profile,
    tail_mass,
    wynn_epsilon,
)
from fracflow.specfun import MediumParams

from oracles import KERNEL_PROFILE, kernel_mass


def P(r, t, n, s):
    return heat_kernel(KernelQuery(r, t, MediumParams(n, s))).density


@pytest.mark.parametrize(
    "n, s, r, t, expected",
    [(1, 1.0, 0.0, 1.0, 0.28209479177387814), (1, 0.5, 0.0, 1.0, 1 / math.pi), (2, 1.0, 2.0, 1.0, math.exp(-1) / (4 * math.pi))],
)
def test_closed_form_examples(n, s, r, t, expected):
    v = heat_kernel_closed_form(KernelQuery(r, t, MediumParams(n, s)))
    assert v.density == pytest.approx(expected, rel=1e-9)


def test_closed_form_rejects_general_order():
    with pytest.raises(DomainError):
        heat_kernel_closed_form(KernelQuery(1.0, 1.0, MediumParams(1, 0.3)))


@pytest.mark.parametrize("n", [1, 2, 3])
@pytest.mark.parametrize("s", [0.5, 1.0])
def test_general_evaluator_matches_closed_forms(n, s):
    p = MediumParams(n, s)
    for r in np.linspace(0.0, 10.0, 100):
        q = KernelQuery(r, 1.3, p)
        ref = heat_kernel_closed_form(q).density
        assert heat_kernel(q).density == pytest.approx(ref, rel=1e-6)


@pytest.mark.parametrize("key", sorted(KERNEL_PROFILE))
def test_profile_against_frozen_oracle(key):
    n, s, r = key
    assert profile(r, MediumParams(n, s)) == pytest.approx(KERNEL_PROFILE[key], rel=1e-9)


@given(
    st.integers(1, 3),
    st.sampled_from([0.3, 0.5, 0.75, 1.0]),
    st.floats(0.0, 3.0),
    st.floats(0.2, 3.0),
    st.floats(0.5, 2.0),
)
def test_self_similarity(n, s, r, t, a):
    lhs = P(r * a, t * a ** (2 * s), n, s)
    rhs = a ** (-n) * P(r, t, n, s)
    assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-300)


@given(st.integers(1, 3), st.sampled_from([0.3, 0.5, 0.75]), st.floats(0.0, 50.0), st.floats(0.05, 5.0))
def test_density_positive(n, s, r, t):
    assert P(r, t, n, s) > 0


def test_profile_table_agrees_with_direct_evaluation():
    rng = np.random.default_rng(3)
    for n, s in [(1, 0.3), (2, 0.75), (3, 0.5), (5, 0.3)]:
        T = kernel_profile(n, s)
        rs = np.concatenate([rng.uniform(0, 3, 15), np.exp(rng.uniform(1, 4, 10))])
        ref = np.array([profile(r, MediumParams(n, s)) for r in rs])
        assert np.max(np.abs(T(rs) / ref - 1)) < 1e-9


def test_gradient_vanishes_at_origin():
    for n in (1, 2, 3):
        q = KernelQuery(0.0, 1.0, MediumParams(n, 0.75))
        for j in range(n):
            assert heat_kernel_gradient(q, j) == 0.0


def test_gradient_finite_difference_example():
    p = MediumParams(1, 0.5)
    g = heat_kernel_gradient(KernelQuery(0.7, 1.0, p), 0)
    step = 1e-4
    fd = (P(0.7 + step, 1.0, 1, 0.5) - P(0.7 - step, 1.0, 1, 0.5)) / (2 * step)
    assert g == pytest.approx(fd, abs=1e-5)
    assert g < 0


@pytest.mark.parametrize("n, s", [(1, 0.3), (2, 0.75), (3, 0.5)])
def test_gradient_identity_grid(n, s):
    p = MediumParams(n, s)
    rng = np.random.default_rng(n)
    step = 1e-4
    for _ in range(50):
        x = rng.uniform(-2, 2, n)
        t = rng.uniform(0.5, 2.0)
        g = heat_kernel_gradient(KernelQuery(0.0, t, p), component=None, point=x)
        for j in range(n):
            e = np.zeros(n)
            e[j] = step
            fd = (P(np.linalg.norm(x + e), t, n, s) - P(np.linalg.norm(x - e), t, n, s)) / (2 * step)
            assert g[j] == pytest.approx(fd, abs=1e-5)
            if x[j] > 0:
                assert g[j] < 0


@pytest.mark.parametrize("s", [0.3, 0.75])
def test_normalization_sample(s):
    p = MediumParams(2, s)
    mass = kernel_mass(lambda r: profile(r, p), 2, s, lambda R: tail_mass(R, p))
    assert mass == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("s", [0.5, 0.75])
def test_semigroup_1d(s):
    p = MediumParams(1, s)
    T = kernel_profile(1, s)
    t, tau = 0.6, 0.4
    f = lambda y, x: T.density(np.abs(x - y), t) * T.density(np.abs(y), tau)
    for x in (0.0, 0.5, 1.7):
        pts = sorted({-50.0, -5.0, -1.0, 0.0, x, 1.0, 5.0, 50.0})
        val = sum(integrate.quad(f, a, b, args=(x,), epsabs=1e-13, epsrel=1e-11, limit=200)[0]
                  for a, b in zip(pts[:-1], pts[1:]))
        val += 2 * integrate.quad(lambda y: f(y, x), 50.0, np.inf, epsabs=1e-14)[0]
        assert val == pytest.approx(P(x, t + tau, 1, s), abs=1e-5)


def test_bound_ratio_diagnostic():
    p = MediumParams(1, 0.5)
    radii = np.geomspace(1e-2, 1e3, 12)
    times = np.geomspace(1e-2, 1e2, 7)
    lo, hi, vals = bound_ratio_sweep(p, radii, times)
    print(f"bound ratio over the sweep: [{lo:.4g}, {hi:.4g}]")
    assert lo > 0 and np.all(np.isfinite(vals))
    far = [kernel_bound_ratio(KernelQuery(r, 1.0, p)) for r in (10.0, 100.0, 1000.0)]
    assert min(far) > 0.1


def test_wynn_accelerates_alternating_series():
    terms = [(-1) ** k / (k + 1) for k in range(20)]
    assert wynn_epsilon(np.cumsum(terms)) == pytest.approx(math.log(2), abs=1e-10)


def test_query_validation():
    with pytest.raises(DomainError):
        KernelQuery(1.0, 0.0, MediumParams(1, 0.5))
    with pytest.raises(DomainError):
        KernelQuery(math.inf, 1.0, MediumParams(1, 0.5))
