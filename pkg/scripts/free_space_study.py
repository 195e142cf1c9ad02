"""Moment verdicts against direct convolution for random free-space data, across orders."""

import argparse

import numpy as np

from fracflow.cauchy import convolve_solution, gradient_fd, stationarity_verdict
from fracflow.probe import EXPECTED, free_space_families
from fracflow.specfun import MediumParams


def responses(name, u, p):
    x = np.zeros(2)
    if name in ("balanced", "unbalanced"):
        return [np.linalg.norm(gradient_fd(u, x, t, p)) / u.sup_norm() for t in (0.5, 1.0, 2.0)]
    return [abs(convolve_solution(u, x, t, p)[0]) / u.sup_norm() for t in (0.5, 1.0, 2.0)]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--orders", default="0.5,0.75")
    ap.add_argument("--size", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    fam = free_space_families(args.seed, args.size)
    for s in map(float, args.orders.split(",")):
        p = MediumParams(2, s)
        for name, items in fam.items():
            kind = "critical" if name in ("balanced", "unbalanced") else "zero"
            hits = sum(stationarity_verdict(u, p, kind=kind)[0] == EXPECTED[name] for u in items)
            r = np.array([responses(name, u, p) for u in items])
            print(f"s={s:.2f} {name:>10}: verdicts {hits}/{len(items)}  max {r.max():.2e}  min at t=1 {r[:, 1].min():.2e}")


if __name__ == "__main__":
    main()
