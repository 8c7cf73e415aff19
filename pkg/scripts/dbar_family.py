"""Weighted dbar constants on the covariant bump family, before and after relocation.

    python3 scripts/dbar_family.py --h 0.0078125 --alpha 1 --count 10
"""
import argparse

import numpy as np

from hypdens import dbar
from hypdens.geometry import build_grid, disk_domain
from hypdens.models import DiskModel, automorphism, disk_alpha_weight


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--h", type=float, default=1 / 128)
    ap.add_argument("--alpha", type=float, default=1.0)
    ap.add_argument("--count", type=int, default=10)
    ap.add_argument("--theta", type=float, default=0.7)
    ap.add_argument("--a", default="0.2,0.1", help="automorphism center x,y")
    args = ap.parse_args()
    grid = build_grid(disk_domain(), args.h)
    w = disk_alpha_weight(args.alpha)
    x, y = (float(v) for v in args.a.split(","))
    f, _ = automorphism(args.theta, complex(x, y))
    forms, centers = dbar.bump_family(grid, count=args.count, alpha=args.alpha)
    moved, _ = dbar.bump_family(grid, count=args.count, alpha=args.alpha, relocate=f)
    print(f"{'center':>18} {'residual':>10} {'constant':>10} {'relocated':>10}")
    consts = []
    for c, form, mform in zip(centers, forms, moved):
        s = dbar.weighted_solve(form, w, DiskModel())
        m = dbar.weighted_solve(mform, w, DiskModel())
        consts.append(s.constant)
        print(f"{c.real:8.4f}{c.imag:+8.4f}i {s.residual:10.2e} {s.constant:10.5f} {m.constant:10.5f}")
    print(f"spread max/min = {max(consts) / min(consts):.4f}")


if __name__ == "__main__":
    main()
