"""Command-line front end.

    cptportfolio <command> --config run.json [--out DIR] [--grid N] [--tol X] [--seed N] [--force]

Commands: audit, classify, solve, path, frontier, verify. Exit codes: 0 ok,
1 verify gap above tolerance, 2 config error, 3 borderline classification,
4 regime mismatch or unattained optimum, 5 ill-posed escalation in verify.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys

import numpy as np

from . import __version__
from .audit import audit_model, audit_passed
from .config import ConfigError, load_config
from .errors import DomainError, RegimeError

EXIT_OK, EXIT_GAP, EXIT_CONFIG, EXIT_BORDERLINE, EXIT_REGIME, EXIT_ILLPOSED = 0, 1, 2, 3, 4, 5
CSV_VERSION = 1


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.12g" % float(v)
    return str(v)


def write_csv(path, command, columns, rows, meta=()):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# cptportfolio {__version__} csv-v{CSV_VERSION} command={command}\n")
        for key, val in meta:
            fh.write(f"# {key}={_cell(val)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_cell(v) for v in r])


class _Run:
    def __init__(self, args):
        self.args = args
        self.cfg = load_config(args.config)
        o = self.cfg.options
        if args.grid is not None:
            o.grid = args.grid
        if args.tol is not None:
            o.tol = args.tol
        if args.seed is not None:
            o.seed = args.seed
        self.out = args.out
        os.makedirs(self.out, exist_ok=True)
        self.model = self.cfg.model()

    def path(self, name):
        return os.path.join(self.out, name)

    def gate(self):
        """Audit before anything else; failures stop the run unless --force."""
        rows = audit_model(self.model)
        if audit_passed(rows) or self.args.force:
            return None
        failed = ", ".join(r.name for r in rows if r.status == "fail")
        print(f"audit failed ({failed}); rerun with --force to continue")
        return EXIT_REGIME


def cmd_audit(run):
    rows = audit_model(run.model)
    write_csv(run.path("audit.csv"), "audit", ["assumption", "status", "detail", "witness"],
              [(r.name, r.status, r.detail, r.witness) for r in rows])
    for r in rows:
        print(f"{r.name:24s} {r.status:7s} {r.detail}" + (f"  [{r.witness}]" if r.witness else ""))
    ok = audit_passed(rows)
    print("audit: " + ("all assumptions pass" if ok else "some assumptions fail"))
    return EXIT_OK if ok or run.args.force else EXIT_REGIME


def _classify(run):
    from .solver import classify_wellposedness

    return classify_wellposedness(run.model, grid_n=run.cfg.options.grid)


def cmd_classify(run):
    from .solver import Tag

    stop = run.gate()
    if stop is not None:
        return stop
    c = _classify(run)
    if c.curve is not None:
        cv = c.curve
        write_csv(run.path("kcurve.csv"), "classify", ["c", "k", "G"], zip(cv.c, cv.k, cv.G),
                  meta=(("tag", c.tag.value), ("inf_k", c.inf_k)))
    print(f"tag: {c.tag.value}")
    print(f"inf k: {c.inf_k:.9g} at c = {c.c_inf_k:.6g}")
    print(f"value: {c.value:.12g}")
    print(f"reason: {c.diagnostic}")
    return EXIT_BORDERLINE if c.tag == Tag.BORDERLINE else EXIT_OK


def _rho_grid(run):
    from scipy.special import ndtri

    k = run.model.kernel
    n = run.cfg.options.rho_points
    s = np.linspace(ndtri(1e-4), -ndtri(1e-4), n)
    return k.from_state(s)


def cmd_solve(run):
    from .solver import Tag, claim_value, solve_master

    stop = run.gate()
    if stop is not None:
        return stop
    c = solve_master(run.model, grid_n=run.cfg.options.grid)
    if c.tag != Tag.ATTAINED:
        print(f"tag: {c.tag.value}; no optimal claim to write")
        print(f"supremum: {c.value:.12g}")
        print(f"reason: {c.diagnostic}")
        return EXIT_BORDERLINE if c.tag == Tag.BORDERLINE else EXIT_REGIME
    cl = c.claim
    rho = _rho_grid(run)
    write_csv(run.path("claim.csv"), "solve", ["rho", "X"], zip(rho, cl.payoff(rho)))
    summary = [("c_star", cl.c_star), ("x_plus_star", cl.x_plus_star),
               ("lambda_star", cl.lambda_star if cl.lambda_star is not None else float("nan")),
               ("loss_level", cl.loss_level), ("value", c.value),
               ("value_recomputed", claim_value(run.model, cl)), ("budget_residual", cl.budget_residual)]
    write_csv(run.path("summary.csv"), "solve", ["quantity", "value"], summary)
    for key, v in summary:
        print(f"{key:18s} {_cell(v)}")
    return EXIT_OK


def cmd_path(run):
    from .replication import PathPoint, merton_ratio, optimal_path, risky_ratio, underweights

    stop = run.gate()
    if stop is not None:
        return stop
    m = run.model
    c = _classify(run)
    try:
        optimal_path(m, PathPoint(0.0, 1.0), c)
    except RegimeError as exc:
        print(f"regime mismatch: {exc}")
        return EXIT_REGIME
    d = m.market.B.size
    mert = merton_ratio(m.market, m.utility.alpha)
    rows = []
    rho_grid = np.geomspace(0.5, 2.0, run.cfg.options.rho_points)
    for t in run.cfg.options.times:
        if not 0 <= t < m.market.T:
            print(f"time {t} lies outside [0, T)")
            return EXIT_CONFIG
        for r in rho_grid:
            p = PathPoint(float(t), float(r))
            w = optimal_path(m, p, c)
            try:
                ratio = risky_ratio(m, p, c)
                under = underweights(m, p, c)
            except DomainError:
                ratio, under = np.full(d, float("nan")), False
            rows.append((t, r, w.x, *w.pi, *ratio, *mert, under))
    cols = (["t", "rho_t", "x"] + [f"pi_{i}" for i in range(d)] + [f"ratio_{i}" for i in range(d)]
            + [f"merton_{i}" for i in range(d)] + ["underweight"])
    write_csv(run.path("path.csv"), "path", cols, rows)
    print(f"wrote {len(rows)} rows; x*(0) at rho=1: {optimal_path(m, PathPoint(0.0, 1.0), c).x:.12g}")
    return EXIT_OK


def cmd_frontier(run):
    from .solver import solve_master

    stop = run.gate()
    if stop is not None:
        return stop
    rows = []
    for x0 in run.cfg.options.frontier_x0:
        c = solve_master(run.model.with_x0(x0), grid_n=run.cfg.options.grid)
        cl = c.claim
        rows.append((x0, c.tag.value, c.value,
                     cl.c_star if cl else float("nan"), cl.x_plus_star if cl else float("nan"),
                     cl.loss_level if cl else float("nan")))
        print(f"x0 {x0:>10.6g}  {c.tag.value:20s} value {c.value:.9g}")
    write_csv(run.path("frontier.csv"), "frontier", ["x0", "tag", "value", "c_star", "x_plus_star", "loss_level"], rows)
    return EXIT_OK


def _sampled_two_level(run, oracle_e, prefs, value):
    """Largest value among random two-level claims on the state economy, all priced at x0."""
    from .oracle import discrete_cpt_value

    rng = np.random.default_rng(run.cfg.options.seed)
    a = oracle_e.p * oracle_e.rho
    x0 = run.model.x0
    best = -math.inf
    for _ in range(run.cfg.options.samples):
        j = int(rng.integers(1, oracle_e.n))
        hi = float(rng.exponential(1.0 + abs(x0)))
        # pay hi on the j cheapest states, then solve the remaining level from the budget
        lo = (x0 - hi * a[:j].sum()) / a[j:].sum()
        x = np.where(np.arange(oracle_e.n) < j, hi, lo)
        best = max(best, discrete_cpt_value(oracle_e, prefs, x))
    return best


def cmd_verify(run):
    from .oracle import OracleConfig, Preferences, brute_force_master, discretize, verify_structure
    from .solver import Tag, solve_master

    stop = run.gate()
    if stop is not None:
        return stop
    o = run.cfg.options
    m = run.model
    c = solve_master(m, grid_n=o.grid)
    e = discretize(m.kernel, o.oracle_n, o.oracle_scheme)
    prefs = Preferences(m.utility, m.t_plus, m.t_minus)
    r = brute_force_master(e, prefs, m.x0, OracleConfig())
    print(f"solver: {c.tag.value} value {c.value:.12g}")
    print(f"oracle: n={e.n} scheme={o.oracle_scheme} value {r.value:.12g} ill_posed={r.ill_posed}")
    rows = [("solver_tag", c.tag.value), ("solver_value", c.value), ("oracle_n", e.n),
            ("oracle_scheme", o.oracle_scheme), ("oracle_value", r.value), ("oracle_ill_posed", r.ill_posed)]
    if r.ill_posed or c.tag == Tag.ILL_POSED:
        agree = r.ill_posed and c.tag == Tag.ILL_POSED
        rows.append(("agree", agree))
        write_csv(run.path("verify.csv"), "verify", ["quantity", "value"], rows)
        print("ill-posed escalation: " + ("solver and oracle agree" if agree else "solver and oracle disagree"))
        return EXIT_ILLPOSED
    gap = abs(c.value - r.value) / max(abs(c.value), 1e-12)
    rep = verify_structure(e, prefs, r.claim)
    sampled = _sampled_two_level(run, e, prefs, r.value)
    rows += [("relative_gap", gap), ("local_search_gain", r.local_gain), ("best_sampled_two_level", sampled)]
    rows += [(f"structure:{ch.name}", ch.passed) for ch in rep.checks]
    write_csv(run.path("verify.csv"), "verify", ["quantity", "value"], rows)
    print(f"relative gap {gap:.3e} (tolerance {o.tol:g})")
    for ch in rep.checks:
        print(f"  {ch.name:22s} {'pass' if ch.passed else 'FAIL'}  {ch.detail}")
    print(f"best of {o.samples} sampled two-level claims: {sampled:.9g}")
    dominated = sampled <= r.value + 1e-9 * max(1.0, abs(r.value))
    return EXIT_OK if gap <= o.tol and rep.passed and not r.local_flag and dominated else EXIT_GAP


COMMANDS = {"audit": cmd_audit, "classify": cmd_classify, "solve": cmd_solve, "path": cmd_path,
            "frontier": cmd_frontier, "verify": cmd_verify}


def build_parser():
    ap = argparse.ArgumentParser(prog="cptportfolio", description="CPT portfolio selection: audit, classify, solve, replicate, verify.")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="JSON run configuration")
    ap.add_argument("--out", default=".", help="directory for CSV outputs")
    ap.add_argument("--grid", type=int, help="threshold grid size")
    ap.add_argument("--tol", type=float, help="relative tolerance for verify")
    ap.add_argument("--seed", type=int, help="seed for sampled comparison claims")
    ap.add_argument("--force", action="store_true", help="continue past failed audit rows")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        run = _Run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.grid is not None and args.grid < 16:
        print("config error in --grid: must be at least 16", file=sys.stderr)
        return EXIT_CONFIG
    return COMMANDS[args.command](run)


if __name__ == "__main__":
    sys.exit(main())
