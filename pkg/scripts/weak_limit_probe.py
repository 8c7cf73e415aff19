"""Disc probe on the exact round annulus: surface triplets versus coordinate-disk triplets.

    python3 scripts/weak_limit_probe.py --collar 2 --depths 4,5,6,7
"""
import argparse

import numpy as np
from scipy.optimize import brentq

from hypdens.models import AnnulusModel, disk_alpha_weight
from hypdens.weak_limits import disc_probe


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--collar", type=float, default=2.0)
    ap.add_argument("--alpha", type=float, default=1.0)
    ap.add_argument("--depths", default="4,5,6")
    ap.add_argument("--points", type=int, default=3000)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()
    R = args.collar
    A = AnnulusModel(np.exp(-R), np.exp(R))
    rng = np.random.default_rng(args.seed)
    r = np.exp(rng.uniform(-R, R, args.points))
    lam = r * np.exp(2j * np.pi * rng.random(args.points))
    lam = lam[(np.abs(lam) > A.r_in * 1.0001) & (np.abs(lam) < A.r_out * 0.9999)]
    depths = [float(d) for d in args.depths.split(",")]
    xs = [brentq(lambda x: A.distance(1.0, np.array([x]))[0] - 2 * d, 1.0 + 1e-9,
                 A.r_out * (1 - 1e-12)) for d in depths]
    P = disc_probe(disk_alpha_weight(args.alpha), lam, 1.0, xs, A)
    for d, x, dist in zip(P.depths, xs, P.distances):
        print(f"depth {d:5.2f}  center {x:.6f}  weak distance {dist:.3e}")
    print("strictly decreasing" if P.decreasing else "not decreasing")


if __name__ == "__main__":
    main()
