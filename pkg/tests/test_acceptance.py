"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line with its wall time; the lines are printed
at the end of the session by the hook in conftest.py.
"""

import math
import time
from contextlib import contextmanager

import numpy as np
from scipy import integrate

from fracflow import probe
from fracflow.ball_green import (
    BallNystrom,
    BallSpec,
    green_ball,
    green_gradient_origin,
    neumann_resolvent,
    poisson_kernel_ball,
    reconstruct_green,
)
from fracflow.cauchy import convolve_solution, gradient_fd, stationarity_verdict
from fracflow.kernel import KernelQuery, heat_kernel, heat_kernel_closed_form, heat_kernel_gradient, tail_mass
from fracflow.lattice import (
    assemble_operator,
    build_domain,
    eigendecompose,
    laplace_wave,
    resolvent_solve,
    sup_bound_check,
)
from fracflow.probe import ProbeParams, centro_probe, free_space_families, radial_probe
from fracflow.specfun import MediumParams
from fracflow.sphere import real_harmonic

from oracles import kernel_mass

RESULTS = {}
FREE_SPACE_ORDER = 0.5
ORIGIN = np.zeros(2)


@contextmanager
def criterion(tag, limit):
    """Time the block, record the outcome and fail on a runtime overrun."""
    probe._setup.cache_clear()
    notes = []
    start = time.perf_counter()
    try:
        yield notes
    except BaseException as exc:
        first = str(exc).strip().splitlines()[0] if str(exc).strip() else type(exc).__name__
        RESULTS[tag] = f"{tag} FAIL {time.perf_counter() - start:7.1f}s  {first[:160]}"
        print(RESULTS[tag])
        raise
    elapsed = time.perf_counter() - start
    ok = elapsed <= limit
    extra = "" if ok else f"  runtime over {limit:.0f}s"
    RESULTS[tag] = f"{tag} {'PASS' if ok else 'FAIL'} {elapsed:7.1f}s  {'; '.join(notes)}{extra}"
    print(RESULTS[tag])
    assert ok, f"{tag} took {elapsed:.1f}s, limit {limit:.0f}s"


def _density(r, t, n, s):
    return heat_kernel(KernelQuery(r, t, MediumParams(n, s))).density


# -- kernel ---------------------------------------------------------------------------------------------


def test_a1_kernel_normalization():
    with criterion("A-1", 60) as notes:
        worst = 0.0
        for n in (1, 2, 3):
            for s in (0.3, 0.5, 0.75, 1.0):
                p = MediumParams(n, s)
                for t in (0.5, 1.0, 2.0):
                    # the density at time t is the unit-time profile rescaled by t^{1/(2s)}
                    scale = t ** (1 / (2 * s))
                    mass = kernel_mass(lambda r: _density(r, t, n, s), n, s, lambda R: tail_mass(R / scale, p), R=30.0 * scale)
                    worst = max(worst, abs(mass - 1.0))
        notes.append(f"max |mass - 1| = {worst:.2e}")
        assert worst <= 1e-6


def test_a2_closed_forms():
    with criterion("A-2", 60) as notes:
        worst = 0.0
        for n in (1, 2, 3):
            for s in (0.5, 1.0):
                for r in np.linspace(0.0, 10.0, 100):
                    q = KernelQuery(r, 1.0, MediumParams(n, s))
                    ref = heat_kernel_closed_form(q).density
                    worst = max(worst, abs(heat_kernel(q).density / ref - 1.0))
        notes.append(f"max relative error = {worst:.2e}")
        assert worst <= 1e-6


def test_a3_gradient_identity():
    with criterion("A-3", 60) as notes:
        rng = np.random.default_rng(2024)
        step = 1e-4
        worst = 0.0
        cases = [(1, 0.3), (2, 0.5), (2, 0.75), (3, 0.5), (3, 1.0)]
        for i in range(50):
            n, s = cases[i % len(cases)]
            p = MediumParams(n, s)
            x = rng.uniform(-2, 2, n)
            t = rng.uniform(0.5, 2.0)
            g = heat_kernel_gradient(KernelQuery(0.0, t, p), component=None, point=x)
            for j in range(n):
                e = np.zeros(n)
                e[j] = step
                fd = (_density(np.linalg.norm(x + e), t, n, s) - _density(np.linalg.norm(x - e), t, n, s)) / (2 * step)
                worst = max(worst, abs(g[j] - fd))
        notes.append(f"max |identity - fd| = {worst:.2e} on 50 points")
        assert worst <= 1e-5


# -- free space --------------------------------------------------------------------------------------------


def _direct_class(responses, sup):
    quiet = all(r <= 1e-5 * sup for r in responses.values())
    loud = responses[1.0] >= 1e-2 * sup
    return "stationary" if quiet else ("moving" if loud else "indeterminate")


def test_a4_critical_point_dual_method():
    with criterion("A-4", 300) as notes:
        p = MediumParams(2, FREE_SPACE_ORDER)
        fam = free_space_families(seed=2024, size=20)
        agree, total = 0, 0
        quiet, loud = 0.0, math.inf
        for name in ("balanced", "unbalanced"):
            for u in fam[name]:
                sup = u.sup_norm()
                resp = {t: np.linalg.norm(gradient_fd(u, ORIGIN, t, p)) for t in (0.5, 1.0, 2.0)}
                direct = _direct_class(resp, sup)
                verdict, _ = stationarity_verdict(u, p)
                total += 1
                agree += (verdict == "stationary_critical") == (direct == "stationary") and direct != "indeterminate"
                if name == "balanced":
                    quiet = max(quiet, max(resp.values()) / sup)
                else:
                    loud = min(loud, resp[1.0] / sup)
        notes.append(f"agreement {agree}/{total}, balanced max {quiet:.1e}, unbalanced min {loud:.3f} (s={FREE_SPACE_ORDER})")
        assert total == 40 and agree == total
        assert quiet <= 1e-5 and loud >= 1e-2


def test_a5_zero_dual_method():
    with criterion("A-5", 300) as notes:
        p = MediumParams(2, FREE_SPACE_ORDER)
        fam = free_space_families(seed=2025, size=20)
        agree, total = 0, 0
        quiet, loud = 0.0, math.inf
        for name in ("odd", "non_odd"):
            for u in fam[name]:
                sup = u.sup_norm()
                resp = {t: abs(convolve_solution(u, ORIGIN, t, p)[0]) for t in (0.5, 1.0, 2.0)}
                direct = _direct_class(resp, sup)
                verdict, _ = stationarity_verdict(u, p, kind="zero")
                total += 1
                agree += (verdict == "stationary_zero") == (direct == "stationary") and direct != "indeterminate"
                if name == "odd":
                    quiet = max(quiet, max(resp.values()) / sup)
                else:
                    loud = min(loud, resp[1.0] / sup)
        notes.append(f"agreement {agree}/{total}, odd max {quiet:.1e}, non-odd min {loud:.3f} (s={FREE_SPACE_ORDER})")
        assert total == 40 and agree == total
        assert quiet <= 1e-5 and loud >= 1e-2


# -- ball Green's function -------------------------------------------------------------------------------------


def _inside(rng, n, rmax=0.95):
    v = rng.normal(size=n)
    return v / np.linalg.norm(v) * rmax * rng.uniform() ** (1 / n)


def _poisson_mass_1d(x, p):
    s = p.order
    f = lambda y: poisson_kernel_ball([x], [y], 1.0, p)
    # y = 1 + w^{1/(1-s)} absorbs the (|y|-1)^{-s} edge singularity on each side
    edge = lambda w, sign: f(sign * (1 + w ** (1 / (1 - s)))) * w ** (s / (1 - s)) / (1 - s)
    mass = sum(integrate.quad(edge, 0.0, 1.0, args=(sign,), epsabs=1e-14, limit=200)[0] for sign in (1.0, -1.0))
    return mass + sum(integrate.quad(f, a, c, epsabs=1e-14, limit=200)[0] for a, c in [(2.0, np.inf), (-np.inf, -2.0)])


def test_a6_green_suite():
    with criterion("A-6", 300) as notes:
        rng = np.random.default_rng(6)
        asym = 0.0
        for n, s in [(1, 0.3), (1, 0.5), (2, 0.5), (2, 0.75), (3, 0.5)]:
            b = BallSpec(1.0, MediumParams(n, s))
            for _ in range(40):
                x, y = _inside(rng, n), _inside(rng, n)
                asym = max(asym, abs(green_ball(x, y, b).value / green_ball(y, x, b).value - 1))
        log_value = green_ball([0.0], [0.5], BallSpec(1.0, MediumParams(1, 0.5))).value
        log_err = abs(log_value - math.log(2 + math.sqrt(3)) / math.pi)
        slope_err = 0.0
        for n, s in [(1, 0.3), (1, 0.5), (2, 0.75), (3, 0.5)]:
            b = BallSpec(1.0, MediumParams(n, s))
            e = np.zeros(n)
            e[0] = 1.0
            rs = np.geomspace(1e-3, 1e-2, 6)
            mags = [np.linalg.norm(green_gradient_origin(r * e, b)) for r in rs]
            slope_err = max(slope_err, abs(np.polyfit(np.log(rs), np.log(mags), 1)[0] - (2 * s - n - 1)))
        mass_err = max(abs(_poisson_mass_1d(x, MediumParams(1, s)) - 1) for x in (0.0, 0.3, -0.7) for s in (0.5, 0.75))
        b = BallSpec(1.0, MediumParams(1, 0.5))
        rec_err, done = 0.0, 0
        while done < 20:
            c = rng.uniform(-0.4, 0.4)
            rho = rng.uniform(0.1, 1.0 - abs(c))
            x = c + rng.uniform(-0.9, 0.9) * rho
            y = rng.uniform(-0.95, 0.95)
            if abs(y - c) <= 1.05 * rho:
                continue
            rec, direct = reconstruct_green([x], [y], [c], rho, b)
            rec_err = max(rec_err, abs(rec / direct - 1))
            done += 1
        notes.append(
            f"symmetry {asym:.1e}, log value {log_err:.1e}, slope error {slope_err:.1e}, "
            f"Poisson mass {mass_err:.1e}, reconstruction {rec_err:.1e}"
        )
        assert asym <= 1e-12 and log_err <= 1e-10 and slope_err <= 0.05
        assert mass_err <= 1e-6 and rec_err <= 1e-4


def _balanced_datum(n, rng):
    terms = []
    for ell in (0, 2, 3):
        for m in ([ell] if n == 2 else range(-ell, ell + 1)):
            terms.append((ell, m, rng.normal(), rng.uniform(1, 4)))

    def u0(pts):
        r = np.linalg.norm(pts, axis=-1)
        om = pts / np.where(r > 0, r, 1.0)[..., None]
        return sum(a * np.exp(-k * r * r) * r**ell * real_harmonic(n, ell, m, om) for ell, m, a, k in terms)

    return u0


def test_a7_balance_preservation():
    with criterion("A-7", 300) as notes:
        rng = np.random.default_rng(7)
        leak, count = 0.0, 0
        grids = {}
        for n, s, k in [(2, 0.5, 3), (2, 0.75, 2), (3, 0.5, 3), (3, 0.75, 2)]:
            b = BallSpec(1.0, MediumParams(n, s))
            grid = BallNystrom(b, n_radial=12, n_angular=24) if n == 2 else BallNystrom(b, n_radial=10)
            grids[n, s] = grid
            for _ in range(k):
                f = grid.sample(_balanced_datum(n, rng))
                leak = max(leak, np.max(np.abs(grid.balance_profile(grid.apply(f)))) / np.max(np.abs(f)))
                count += 1
        res_leak, shifts = 0.0, 0
        for (n, s), grid in grids.items():
            f = grid.sample(_balanced_datum(n, rng))
            for lam in (0.5, 2.0, 8.0, 30.0):
                res = neumann_resolvent(f, lam, grid.ball, grid=grid)
                res_leak = max(res_leak, np.max(np.abs(grid.balance_profile(res.values))) / np.max(np.abs(f)))
                shifts = max(shifts, res.shifts)
        notes.append(f"Green leak {leak:.1e} on {count} data, resolvent leak {res_leak:.1e}, max shifts {shifts}")
        assert count == 10 and leak <= 1e-8
        assert res_leak <= 1e-8 and shifts >= 1


# -- lattice probes --------------------------------------------------------------------------------------------------


def test_a8_radial_probe():
    with criterion("A-8", 900) as notes:
        r = radial_probe(ProbeParams())
        notes.append(
            f"ball {r.trend[0]:.1e} -> {r.trend[-1]:.1e}, ellipse {r.control_trend[0]:.1e} -> {r.control_trend[-1]:.1e}, "
            f"ratio at h={r.h:g}: {r.separation_ratio:.1f} (coarse {r.control_trend[0] / r.trend[0]:.1f})"
        )
        assert r.trend[0] <= 1e-3
        assert r.decreasing
        assert r.separation_ratio >= 30


def test_a9_centro_probes():
    with criterion("A-9", 600) as notes:
        even = centro_probe(ProbeParams(), "even")
        odd = centro_probe(ProbeParams(), "odd")
        notes.append(
            f"even {even.symmetric_max:.1e}, odd {odd.symmetric_max:.1e}, "
            f"even control {even.control_max:.2e}, odd control {odd.control_max:.2e}"
        )
        assert even.symmetric_max <= 1e-10 and odd.symmetric_max <= 1e-10
        assert even.star_shaped and odd.star_shaped
        assert even.control_max >= 1e-3


def test_a10_bridge_and_sup_bound():
    with criterion("A-10", 600) as notes:
        p = MediumParams(2, 0.75)
        bridge, ratio, violations = 0.0, 0.0, 0
        for shape in ("ball", "ellipse", "perturbed_ball", "centrosymmetric_star", "asymmetric_star"):
            d = build_domain(shape, 1 / 32, radius=0.5)
            A = assemble_operator(d, p)
            S = eigendecompose(A, d.size)
            x = d.coords
            u0 = np.exp(-6 * np.sum((x - [0.1, -0.05]) ** 2, axis=1)) * (1 + x[:, 0])
            for lam in (0.5, 1.0, 2.0):
                U = resolvent_solve(A, u0, lam * lam)
                W = laplace_wave(S, u0, lam)
                bridge = max(bridge, np.max(np.abs(U - W)) / np.max(np.abs(U)))
            rep = sup_bound_check(d, A, u0 - 0.3, [0.1, 1.0, 10.0, 100.0], big_radius=0.75)
            ratio = max(ratio, rep.max_ratio)
            violations += rep.violations
        notes.append(f"bridge {bridge:.1e} on 5 domains, sup ratio {ratio:.3f}, violations {violations}")
        assert bridge <= 1e-5
        assert violations == 0 and ratio <= 1.0
