"""Print k(c) and G(c) along the threshold grid for the bundled configs and report the decision."""

import argparse
import os

import numpy as np

from cptportfolio.config import load_config
from cptportfolio.solver import classify_wellposedness

HERE = os.path.dirname(os.path.abspath(__file__))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("configs", nargs="*", default=[os.path.join(HERE, "..", "configs", f) for f in ("baseline.json", "tk_loss.json", "merton.json")])
    ap.add_argument("--rows", type=int, default=12)
    args = ap.parse_args()
    for path in args.configs:
        model = load_config(path).model()
        c = classify_wellposedness(model)
        print(f"== {os.path.basename(path)}: {c.tag.value}, inf k = {c.inf_k:.6g} at c = {c.c_inf_k:.6g}")
        print(f"   {c.diagnostic}")
        if c.curve is None:
            continue
        cv = c.curve
        idx = np.unique(np.linspace(0, len(cv.c) - 1, args.rows).astype(int))
        print(f"   {'c':>12s} {'k(c)':>12s} {'G(c)':>14s}")
        for i in idx:
            print(f"   {cv.c[i]:12.6g} {cv.k[i]:12.6g} {cv.G[i]:14.6g}")


if __name__ == "__main__":
    main()
