"""Disk benchmark: classifier verdicts next to oracle verdicts over a density sweep.

    python3 scripts/oracle_sweep.py --alpha 1 --sweep 0.5,0.7,1.3,2.0 --n-max 64
    python3 scripts/oracle_sweep.py --alpha 2 --p 2 --n-max 96
"""
import argparse
import json

import numpy as np

from hypdens.density import classify, scan_centers
from hypdens.disk_oracle import benchmark_family, seip_benchmark
from hypdens.models import DiskModel, disk_alpha_weight

RADII = (2.0, 3.0, 4.5, 6.0)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--alpha", type=float, default=1.0)
    ap.add_argument("--p", type=float, default=np.inf)
    ap.add_argument("--sweep", default="0.5,0.7,1.3,1.6,2.0")
    ap.add_argument("--n-max", type=int, default=64)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    sweep = [float(t) for t in args.sweep.split(",")]
    p = args.p
    reports, crossing = seip_benchmark(args.alpha, sweep, n_max=args.n_max, seed=args.seed, p=p)
    thr, alpha_eff = (1.0, args.alpha) if p == np.inf else (1.0 / p, args.alpha - 1.0)
    centers = scan_centers(9.0 - max(RADII) - 1.0, 2, 6, args.seed)
    rows = []
    for rep in reports:
        seq, _ = benchmark_family(rep.target * thr * alpha_eff / (2 * np.pi))
        c = classify(seq, disk_alpha_weight(args.alpha), DiskModel(), centers, RADII,
                     p=None if p == np.inf else p)
        rows.append({"target": rep.target, "lattice": rep.label, "density": rep.measured_density,
                     "classifier": c.verdict, "oracle": rep.verdict, "dims": list(rep.dims),
                     "constants": list(rep.constants), **rep.extras})
        print(f"t={rep.target:<5g} {rep.label:<7} D={rep.measured_density:.3f}  "
              f"classifier={c.verdict:<16} oracle={rep.verdict:<12} constants="
              + " ".join(f"{x:.3g}" for x in rep.constants))
    print(json.dumps({"crossing": None if np.isnan(crossing) else crossing, "rows": rows},
                     indent=2, default=float))


if __name__ == "__main__":
    main()
