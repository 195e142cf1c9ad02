"""Tabulate the fractional heat kernel, its mass and the two-sided bound ratio."""

import argparse

import numpy as np

from scipy import integrate

from fracflow.kernel import KernelQuery, bound_ratio_sweep, heat_kernel, tail_mass
from fracflow.specfun import MediumParams, sphere_area


def mass(p, R=30.0):
    f = lambda r: r ** (p.dim - 1) * heat_kernel(KernelQuery(r, 1.0, p)).density
    pts = [0.0, 0.5, 1, 2, 3, 5, 8, 12, 20, R]
    body = sum(integrate.quad(f, a, b, epsrel=1e-12, limit=200)[0] for a, b in zip(pts[:-1], pts[1:]))
    return sphere_area(p.dim) * body + tail_mass(R, p)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dims", default="1,2,3")
    ap.add_argument("--orders", default="0.3,0.5,0.75,1")
    args = ap.parse_args()
    radii = np.geomspace(1e-2, 20, 12)
    print(f"{'N':>2} {'s':>5} {'P(0,1)':>12} {'|mass-1|':>10} {'bound lo':>9} {'bound hi':>9}")
    for n in map(int, args.dims.split(",")):
        for s in map(float, args.orders.split(",")):
            p = MediumParams(n, s)
            # the two-sided power bound only holds below s = 1
            lo, hi = bound_ratio_sweep(p, radii, [0.5, 1.0, 2.0])[:2] if s < 1 else (np.nan, np.nan)
            p0 = heat_kernel(KernelQuery(0.0, 1.0, p)).density
            print(f"{n:>2} {s:>5.2f} {p0:>12.8f} {abs(mass(p) - 1):>10.1e} {lo:>9.3f} {hi:>9.3f}")


if __name__ == "__main__":
    main()
