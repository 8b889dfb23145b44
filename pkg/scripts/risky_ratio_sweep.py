"""Risky-wealth ratio of the optimal path against the Merton ratio across (t, rho_t).

Writes a CSV when --out is given; otherwise prints a compact table.
"""

import argparse
import csv

import numpy as np

from cptportfolio.config import load_config
from cptportfolio.replication import PathPoint, merton_ratio, risky_ratio
from cptportfolio.solver import classify_wellposedness


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default="configs/tk_loss.json")
    ap.add_argument("--x0", type=float, default=1.0)
    ap.add_argument("--alphas", type=float, nargs="*", default=[0.5, 0.7, 0.88])
    ap.add_argument("--out")
    args = ap.parse_args()
    cfg = load_config(args.config)
    times = np.linspace(0.0, 0.9, 4)
    rhos = np.geomspace(0.5, 2.0, 7)
    rows = []
    for alpha in args.alphas:
        cfg.utility = type(cfg.utility)(alpha, cfg.utility.k_minus)
        m = cfg.model(args.x0)
        c = classify_wellposedness(m)
        if c.inf_k < 1:
            print(f"alpha {alpha}: inf k = {c.inf_k:.4g} < 1, closed-form path unavailable")
            continue
        mert = merton_ratio(m.market, alpha)[0]
        print(f"alpha {alpha}: Merton ratio {mert:.6g}")
        print("   t \\ rho_t " + " ".join(f"{r:8.3g}" for r in rhos))
        for t in times:
            vals = [risky_ratio(m, PathPoint(float(t), float(r)), c)[0] for r in rhos]
            rows += [(alpha, t, r, v, mert) for r, v in zip(rhos, vals)]
            print(f"   {t:9.3g} " + " ".join(f"{v:8.4g}" for v in vals))
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["alpha", "t", "rho_t", "ratio", "merton"])
            w.writerows(rows)


if __name__ == "__main__":
    main()
