"""Discrete oracle value against state count, for both discretization schemes, next to the continuous solver."""

import argparse

from cptportfolio.config import load_config
from cptportfolio.oracle import Preferences, brute_force_master, discretize
from cptportfolio.solver import solve_master


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default="configs/tk_loss.json")
    ap.add_argument("--x0", type=float, nargs="*", default=[-1.0, 0.0, 1.0])
    ap.add_argument("--sizes", type=int, nargs="*", default=[25, 50, 100, 200, 400])
    args = ap.parse_args()
    cfg = load_config(args.config)
    for x0 in args.x0:
        m = cfg.model(x0)
        s = solve_master(m)
        prefs = Preferences(m.utility, m.t_plus, m.t_minus)
        print(f"x0 = {x0:g}: solver {s.tag.value} value {s.value:.10g}")
        print(f"  {'n':>5s} {'scheme':>16s} {'oracle':>14s} {'rel gap':>10s} {'ill-posed':>9s}")
        for scheme in ("equal-prob", "stratified-tail"):
            for n in args.sizes:
                r = brute_force_master(discretize(m.kernel, n, scheme), prefs, x0)
                gap = abs(r.value - s.value) / abs(s.value) if s.value not in (0.0,) and abs(s.value) < float("inf") else float("nan")
                print(f"  {n:5d} {scheme:>16s} {r.value:14.8g} {gap:10.2e} {str(r.ill_posed):>9s}")


if __name__ == "__main__":
    main()
