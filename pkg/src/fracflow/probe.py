"""Symmetry probes on lattices and in free space.

Each lattice probe compares an observable at the origin (gradient or value of
the heat flow, or of the Laplace-transformed wave flow W_lam) on a symmetric
domain with the same observable on a control domain that lacks the symmetry.
Both maxima are taken over a basis of data and a grid of times or rates, and
repeated at h and h/2 to expose the refinement trend.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np

from . import cauchy
from .errors import DomainError, GeometryError
from .lattice import (
    DomainSpec,
    LatticeDomain,
    assemble_operator,
    build_domain,
    eigendecompose,
    gradient_at,
    heat_evolve,
    laplace_wave,
    resolvent_solve,
)
from .specfun import MediumParams
from .sphere import spherical_quadrature

OBSERVABLES = ("grad_origin", "value_origin", "grad_resolvent", "value_resolvent")
# angular factors (ell, m) of the balanced basis; m < 0 selects sin(|m| theta)
BASIS_HARMONICS = ((0, 0), (2, 2), (2, -2), (3, 3), (3, -3), (5, 5))
BASIS_POWERS = (4, 8)


class HypothesisWarning(UserWarning):
    """A probe ran on a domain outside the hypotheses of the statement it tests."""


@dataclass(frozen=True)
class ProbeParams:
    order: float = 0.75
    h: float = 1 / 32
    radius: float = 0.5
    delta: float = 0.3
    aspect: float = 1.3
    amplitude: float = 0.2
    times: tuple = (0.2, 0.5, 1.0, 2.0)
    lams: tuple = (0.5, 1.0, 2.0, 4.0)
    count: int = 12
    levels: int = 2  # h, h/2, ...
    threshold: float = 30.0
    stencil: int = 4

    def __post_init__(self):
        if not 0 < self.order < 1:
            raise DomainError("probes need a nonlocal order 0 < s < 1")
        if not (self.h > 0 and self.delta > 0 and self.radius > self.delta):
            raise DomainError("need h > 0 and 0 < delta < radius")
        if self.levels < 1 or self.count < 1:
            raise DomainError("levels and count must be positive")

    @property
    def medium(self) -> MediumParams:
        return MediumParams(2, self.order)

    def spacings(self):
        return [self.h / 2**i for i in range(self.levels)]


@dataclass
class ProbeReport:
    domain: str
    control: str
    datum: str
    observable: str
    symmetric_max: float
    control_max: float
    separation_ratio: float
    h: float
    trend: list  # symmetric_max at h, h/2, ...
    control_trend: list
    star_shaped: bool = True
    extras: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)  # (domain, h, datum, observable, parameter, value)

    @property
    def decreasing(self) -> bool:
        floor = 2.0 * np.finfo(float).eps
        return all(b <= a or b <= floor for a, b in zip(self.trend, self.trend[1:]))

    def to_dict(self) -> dict:
        out = asdict(self)
        out.pop("rows")
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=float)


CSV_HEADER = ("domain", "h", "datum", "observable", "parameter", "value")


def report_rows_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow([r[0], f"{r[1]:.17g}", r[2], r[3], f"{r[4]:.17g}", f"{r[5]:.17g}"])
    return buf.getvalue()


# -- lattice setup ---------------------------------------------------------------------------


@lru_cache(maxsize=16)
def _setup(spec: DomainSpec, h: float, order: float):
    d = build_domain(spec, h)
    A = assemble_operator(d, MediumParams(2, order))
    return d, A, eigendecompose(A, d.size)


_store = None


def use_store(store):
    """Route lattice setups through ``store.problem(spec, h, order)``; None restores the memo. Returns the old store."""
    global _store
    old, _store = _store, store
    return old


def lattice_problem(spec: DomainSpec, h: float, order: float):
    """Domain, operator and full spectrum, memoized per (shape, h, s)."""
    if _store is not None:
        return _store.problem(spec, float(h), float(order))
    return _setup(spec, float(h), float(order))


# -- data -----------------------------------------------------------------------------------


def is_balanced(u0: cauchy.RadialAngularField, rtol: float = 1e-10) -> bool:
    A = cauchy.vector_moment_profile(u0)
    return bool(np.max(np.abs(A)) <= rtol * max(u0.sup_norm(), 1e-300))


def shell_balance(d: LatticeDomain, u: np.ndarray) -> np.ndarray:
    """Remove from u, on every lattice circle |k|^2 = n, its correlation with x.

    This is the lattice form of a vanishing first moment on every sphere:
    afterwards sum_{|k|^2 = n} k u(hk) = 0 for all n.
    """
    k = d.indices
    n2 = np.sum(k * k, axis=1)
    out = np.array(u, dtype=float)
    for v in np.unique(n2[out != 0]):
        if v == 0:
            continue
        m = n2 == v
        X = k[m].astype(float)
        c = np.linalg.lstsq(X, out[m], rcond=None)[0]
        out[m] -= X @ c
    return out


@dataclass
class LatticeDatum:
    label: str
    field: cauchy.RadialAngularField
    values: np.ndarray


def balanced_basis(d: LatticeDomain, delta: float, count: int = 12) -> list:
    """Data phi(r) Y(theta) supported in B_delta with no degree-1 angular content.

    Each continuum datum must pass the balance check; lattice samples are then
    made balanced on every lattice circle.
    """
    if delta / d.spacing < 2.5:
        raise GeometryError(f"B_delta holds fewer than 5 nodes across (delta/h = {delta / d.spacing:.2f})")
    if np.max(np.linalg.norm(d.coords, axis=1)) < delta:
        raise GeometryError("B_delta does not fit inside the domain")
    quad = spherical_quadrature(2, 24)
    out = []
    for power in BASIS_POWERS:
        for ell, m in BASIS_HARMONICS:
            if len(out) == count:
                return out
            f = cauchy.harmonic_bump(2, ell, m, support=delta, power=power, quad=quad)
            if not is_balanced(f):
                raise GeometryError(f"basis datum Y{ell},{m} failed the balance check")
            vals = shell_balance(d, f(d.coords))
            out.append(LatticeDatum(f"p{power}_Y{ell},{m}", f, vals / np.max(np.abs(vals))))
    return out


def parity_basis(d: LatticeDomain, delta: float, parity: str, count: int = 6, seed: int = 7) -> list:
    """psi(x) +- psi(-x) for off-centre bumps psi inside B_delta."""
    if parity not in ("even", "odd"):
        raise DomainError("parity must be 'even' or 'odd'")
    rng = np.random.default_rng(seed)
    X = d.coords
    sign = 1.0 if parity == "even" else -1.0
    out = []
    for i in range(count):
        rho = rng.uniform(0.3, 0.5) * delta
        c = rng.uniform(-1.0, 1.0, 2)
        c *= rng.uniform(0.1, 1.0) * (delta - rho) / np.linalg.norm(c)
        psi = lambda P: np.clip(1.0 - np.sum((P - c) ** 2, axis=1) / rho**2, 0.0, None) ** 4
        vals = psi(X) + sign * psi(-X)
        out.append(LatticeDatum(f"{parity}{i}", None, vals / np.max(np.abs(vals))))
    return out


# -- observables ----------------------------------------------------------------------------------


def _origin_observable(d, values, kind, stencil):
    if kind == "grad":
        return float(np.linalg.norm(gradient_at(values, d, order=stencil)))
    return abs(float(values[d.origin]))


def _heat_scan(spec, h, params, data_fn, kind, label, rows):
    d, A, S = lattice_problem(spec, h, params.order)
    best = 0.0
    for datum in data_fn(d):
        for t in params.times:
            val = _origin_observable(d, heat_evolve(S, datum.values, t), kind, params.stencil)
            rows.append((label, h, datum.label, f"{kind}_origin", t, val))
            best = max(best, val)
    return best, d


def _wave_scan(spec, h, params, data_fn, kind, label, rows, bridge):
    d, A, S = lattice_problem(spec, h, params.order)
    best = 0.0
    for datum in data_fn(d):
        for lam in params.lams:
            W = resolvent_solve(A, datum.values, lam * lam)
            if bridge is not None:
                Wq = laplace_wave(S, datum.values, lam)
                bridge.append(float(np.max(np.abs(W - Wq))))
            val = _origin_observable(d, W, kind, params.stencil)
            rows.append((label, h, datum.label, f"{kind}_resolvent", lam, val))
            best = max(best, val)
    return best, d


def _assemble_report(sym_label, ctl_label, datum, observable, params, sym_vals, ctl_vals, star, rows, extras=None):
    sym, ctl = sym_vals[-1], ctl_vals[-1]
    ratio = ctl / sym if sym > 0 else math.inf
    return ProbeReport(sym_label, ctl_label, datum, observable, sym, ctl, ratio, params.spacings()[-1],
                       list(sym_vals), list(ctl_vals), star, extras or {}, rows)


def _specs(params: ProbeParams, family: str):
    if family == "radial":
        return (DomainSpec("ball", params.radius), DomainSpec("ellipse", params.radius, aspect=params.aspect))
    return (DomainSpec("centrosymmetric_star", params.radius, amplitude=params.amplitude),
            DomainSpec("asymmetric_star", params.radius, amplitude=params.amplitude))


def radial_probe(params: ProbeParams = ProbeParams()) -> ProbeReport:
    """Max |grad u(0,t)| over balanced data: lattice ball against an ellipse control."""
    ball, ellipse = _specs(params, "radial")
    data_fn = lambda d: balanced_basis(d, params.delta, params.count)
    rows, sym, ctl = [], [], []
    for h in params.spacings():
        sym.append(_heat_scan(ball, h, params, data_fn, "grad", "ball", rows)[0])
        ctl.append(_heat_scan(ellipse, h, params, data_fn, "grad", "ellipse", rows)[0])
    return _assemble_report("ball", "ellipse", "balanced", "grad_origin", params, sym, ctl, True, rows)


def _check_star(d: LatticeDomain):
    if not d.star_shaped:
        warnings.warn(f"{d.shape} lattice is not star-shaped about the origin", HypothesisWarning, stacklevel=3)
    return d.star_shaped


def centro_probe(params: ProbeParams = ProbeParams(), parity: str = "even") -> ProbeReport:
    """Even data with the gradient observable, odd data with the value observable."""
    sym_spec, ctl_spec = _specs(params, "centro")
    kind = "grad" if parity == "even" else "value"
    data_fn = lambda d: parity_basis(d, params.delta, parity, count=params.count // 2)
    rows, sym, ctl, star = [], [], [], True
    for h in params.spacings():
        s_val, d = _heat_scan(sym_spec, h, params, data_fn, kind, "centrosymmetric_star", rows)
        c_val, dc = _heat_scan(ctl_spec, h, params, data_fn, kind, "asymmetric_star", rows)
        star = _check_star(d) and _check_star(dc) and star
        sym.append(s_val)
        ctl.append(c_val)
    return _assemble_report("centrosymmetric_star", "asymmetric_star", parity, f"{kind}_origin", params, sym, ctl,
                            star, rows)


def wave_probe(params: ProbeParams = ProbeParams(), observable: str = "grad_resolvent", family: str = "radial",
               parity: str = "even") -> ProbeReport:
    """Same comparison for W_lam = (A + lam^2)^{-1} u0 over lam in params.lams.

    The largest node difference between W_lam and the time quadrature of the
    wave solution is recorded as extras["bridge_error"].
    """
    if observable not in ("grad_resolvent", "value_resolvent"):
        raise DomainError("wave probes observe grad_resolvent or value_resolvent")
    kind = observable.split("_")[0]
    sym_spec, ctl_spec = _specs(params, family)
    if family == "radial":
        data_fn = lambda d: balanced_basis(d, params.delta, params.count)
        datum = "balanced"
    else:
        data_fn = lambda d: parity_basis(d, params.delta, parity, count=params.count // 2)
        datum = parity
    rows, sym, ctl, bridge, star = [], [], [], [], True
    for h in params.spacings():
        s_val, d = _wave_scan(sym_spec, h, params, data_fn, kind, sym_spec.shape, rows, bridge)
        c_val, dc = _wave_scan(ctl_spec, h, params, data_fn, kind, ctl_spec.shape, rows, bridge)
        if family != "radial":
            star = _check_star(d) and _check_star(dc) and star
        sym.append(s_val)
        ctl.append(c_val)
    return _assemble_report(sym_spec.shape, ctl_spec.shape, datum, observable, params, sym, ctl, star, rows,
                            {"bridge_error": max(bridge)})


# -- free space --------------------------------------------------------------------------------


def _random_field(rng, harmonics, support, quad):
    fields, coef = [], []
    for ell, m in harmonics:
        fields.append(cauchy.harmonic_bump(2, ell, m, support=support, power=int(rng.integers(4, 9)), quad=quad))
        coef.append(rng.uniform(0.5, 1.5) * rng.choice([-1.0, 1.0]))
    return cauchy.combine(fields, coef)


def free_space_families(seed: int = 0, size: int = 10, support: float = 1.0):
    """Balanced / unbalanced and odd / non-odd random data in the plane."""
    rng = np.random.default_rng(seed)
    quad = spherical_quadrature(2, 32)
    even_pool = [(0, 0), (2, 2), (2, -2), (4, 4)]
    bal_pool = even_pool + [(3, 3), (3, -3)]
    odd_pool = [(1, 1), (1, -1), (3, 3), (3, -3)]
    fam = {"balanced": [], "unbalanced": [], "odd": [], "non_odd": []}
    for _ in range(size):
        pick = lambda pool, n: [pool[i] for i in rng.choice(len(pool), size=n, replace=False)]
        fam["balanced"].append(_random_field(rng, pick(bal_pool, 3), support, quad))
        base = _random_field(rng, pick(bal_pool, 2), support, quad)
        dip = cauchy.dipole(2, support, direction=rng.normal(size=2), quad=quad)
        fam["unbalanced"].append(base + dip.scaled(1.0 / dip.sup_norm()))
        fam["odd"].append(_random_field(rng, pick(odd_pool, 2), support, quad))
        rad = cauchy.radial_bump(2, support, quad=quad)
        fam["non_odd"].append(_random_field(rng, pick(odd_pool, 2), support, quad) + rad)
    return fam


EXPECTED = {"balanced": "stationary_critical", "unbalanced": "moving", "odd": "stationary_zero", "non_odd": "nonzero"}


def free_space_probe(params: ProbeParams = ProbeParams(), seed: int = 0, size: int = 10) -> ProbeReport:
    """Moment verdicts against direct evaluation over the four random families."""
    p = params.medium
    fam = free_space_families(seed, size)
    rows, agree, total = [], 0, 0
    sym, ctl = 0.0, math.inf
    for name, items in fam.items():
        kind = "critical" if name in ("balanced", "unbalanced") else "zero"
        obs = "grad_origin" if kind == "critical" else "value_origin"
        for i, u0 in enumerate(items):
            verdict, ev = cauchy.stationarity_verdict(u0, p, kind=kind)
            total += 1
            agree += verdict == EXPECTED[name]
            for t, r in zip(ev.times, ev.responses):
                rel = r / u0.sup_norm()
                rows.append(("free_space", 0.0, f"{name}{i}", obs, t, rel))
                if name in ("balanced", "odd"):
                    sym = max(sym, rel)
                elif t == 1.0:
                    ctl = min(ctl, rel)
    rep = _assemble_report("free_space", "free_space", "random", "grad_origin+value_origin", params, [sym], [ctl], True,
                           rows, {"agreement": agree / total, "count": total})
    rep.h = 0.0
    return rep
