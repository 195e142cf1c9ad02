"""Quadrature on S^{N-1} and real spherical harmonics for N = 1, 2, 3."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import lpmv

from .errors import DomainError
from .specfun import sphere_area


@dataclass(frozen=True)
class SphericalQuadrature:
    """Antipodally symmetric nodes and positive weights on the unit sphere.

    ``degree`` is the highest polynomial degree integrated exactly. Nodes come
    in antipodal pairs, so odd integrands sum to zero in floating point.
    """

    dim: int
    nodes: np.ndarray  # (M, dim)
    weights: np.ndarray  # (M,)
    degree: int

    def integrate(self, values, axis=-1):
        return np.tensordot(values, self.weights, axes=([axis], [0]))

    @property
    def size(self) -> int:
        return len(self.weights)


def spherical_quadrature(dim: int, degree: int = 16) -> SphericalQuadrature:
    """Product rule exact to ``degree`` (rounded up to an odd number)."""
    if degree < 1:
        raise DomainError("degree must be positive")
    if dim == 1:
        return SphericalQuadrature(1, np.array([[1.0], [-1.0]]), np.array([1.0, 1.0]), 10**6)
    if dim == 2:
        m = degree + 1 + (degree + 1) % 2  # even, so theta + pi is a node
        th = 2.0 * np.pi * np.arange(m) / m
        nodes = np.stack([np.cos(th), np.sin(th)], axis=1)
        return SphericalQuadrature(2, nodes, np.full(m, 2.0 * np.pi / m), m - 1)
    if dim == 3:
        n_theta = degree // 2 + 1
        z, wz = leggauss(n_theta)
        m = 2 * n_theta
        phi = 2.0 * np.pi * np.arange(m) / m
        zz, pp = np.meshgrid(z, phi, indexing="ij")
        rho = np.sqrt(1.0 - zz**2)
        nodes = np.stack([rho * np.cos(pp), rho * np.sin(pp), zz], axis=-1).reshape(-1, 3)
        weights = (wz[:, None] * np.full(m, 2.0 * np.pi / m)[None, :]).reshape(-1)
        return SphericalQuadrature(3, nodes, weights, min(2 * n_theta - 1, m - 1))
    raise DomainError(f"spherical quadrature implemented for N in 1..3, got {dim}")


# -- icosahedral orbit rule -------------------------------------------------------


def _icosahedral_orbits():
    g = 0.5 * (1.0 + math.sqrt(5.0))
    verts = []
    for a in (-1.0, 1.0):
        for b in (-g, g):
            verts += [(0.0, a, b), (a, b, 0.0), (b, 0.0, a)]
    verts = np.array(verts)
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    # faces: triples of mutually adjacent vertices; edges: adjacent pairs
    d = verts @ verts.T
    adj = np.isclose(d, d[0][d[0] < 0.999].max())
    edges, faces = [], []
    n = len(verts)
    for i in range(n):
        for j in range(i + 1, n):
            if adj[i, j]:
                edges.append(verts[i] + verts[j])
                for k in range(j + 1, n):
                    if adj[i, k] and adj[j, k]:
                        faces.append(verts[i] + verts[j] + verts[k])
    norm = lambda a: np.array(a) / np.linalg.norm(a, axis=1, keepdims=True)
    return verts, norm(faces), norm(edges)


def icosahedral_quadrature() -> SphericalQuadrature:
    """62-point rule on S^2 built from the vertex, face and edge orbits.

    Orbit weights make the rule exact to degree 11; every node set is invariant
    under the full icosahedral group, including x -> -x.
    """
    orbits = _icosahedral_orbits()
    # moments of the two lowest invariant harmonics (degrees 6 and 10) plus
    # the total mass determine the three orbit weights
    axis = orbits[0][0]
    rows = []
    for ell in (0, 6, 10):
        rows.append([np.sum(legendre_zonal(ell, pts @ axis)) for pts in orbits])
    rhs = np.array([4.0 * np.pi, 0.0, 0.0])
    w = np.linalg.solve(np.array(rows), rhs)
    nodes = np.concatenate(orbits)
    weights = np.concatenate([np.full(len(o), wi) for o, wi in zip(orbits, w)])
    return SphericalQuadrature(3, nodes, weights, 11)


def legendre_zonal(ell: int, x):
    return lpmv(0, ell, np.clip(x, -1.0, 1.0))


# -- real harmonics -----------------------------------------------------------------


def harmonic_index(dim: int, ell: int):
    """Admissible orders m for degree ``ell``."""
    if dim == 1:
        if ell not in (0, 1):
            raise DomainError("in one dimension only ell = 0 (even) and ell = 1 (odd) exist")
        return [0]
    if dim == 2:
        return [0] if ell == 0 else [-ell, ell]
    if dim == 3:
        return list(range(-ell, ell + 1))
    raise DomainError(f"harmonics implemented for N in 1..3, got {dim}")


def real_harmonic(dim: int, ell: int, m: int, omega):
    """Real spherical harmonic of degree ``ell`` at unit vectors ``omega``.

    N=2: cos(ell theta) for m >= 0, sin(ell theta) for m < 0.
    N=3: L2-normalized real harmonics built from associated Legendre functions.
    N=1: 1 or omega.
    """
    omega = np.asarray(omega, dtype=float)
    if dim == 1:
        if ell == 0:
            return np.ones(omega.shape[:-1])
        if ell == 1:
            return omega[..., 0].copy()
        raise DomainError("ell must be 0 or 1 when N = 1")
    if dim == 2:
        th = np.arctan2(omega[..., 1], omega[..., 0])
        return np.cos(ell * th) if m >= 0 else np.sin(ell * th)
    if dim == 3:
        if abs(m) > ell:
            raise DomainError("need |m| <= ell")
        z = np.clip(omega[..., 2], -1.0, 1.0)
        ph = np.arctan2(omega[..., 1], omega[..., 0])
        am = abs(m)
        norm = math.sqrt((2 * ell + 1) / (4 * math.pi) * math.factorial(ell - am) / math.factorial(ell + am))
        # lpmv carries the Condon-Shortley phase; drop it
        leg = (-1) ** am * lpmv(am, ell, z)
        if m == 0:
            return norm * leg
        trig = np.cos(am * ph) if m > 0 else np.sin(am * ph)
        return math.sqrt(2.0) * norm * leg * trig
    raise DomainError(f"harmonics implemented for N in 1..3, got {dim}")


def mean_of_products(q: SphericalQuadrature, f, g):
    """Quadrature of f(omega) g(omega) over the sphere (sanity helper)."""
    return float(np.sum(q.weights * f(q.nodes) * g(q.nodes)))


def total_measure(dim: int) -> float:
    return sphere_area(dim)
