"""Pass/fail/waived table for the standing assumptions of a model."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import IntegrabilityError
from .kernel import INF
from .preferences import monotonicity_check, validate_distortion, validate_utility


@dataclass
class AuditRow:
    name: str
    status: str  # pass | fail | waived
    detail: str
    witness: str = ""


def _fmt(w):
    if w is None:
        return ""
    if isinstance(w, np.ndarray):
        return " ".join(f"{v:.6g}" for v in w.ravel())
    if isinstance(w, tuple):
        return " ".join(f"{v:.6g}" if isinstance(v, float) else str(v) for v in w)
    return str(w)


def audit_model(model) -> list:
    from .solver import phi, undistorted_loss_trap

    rows = []
    waived = set(model.waived)

    def add(name, ok, detail, witness=None):
        status = "pass" if ok else ("waived" if name in waived else "fail")
        rows.append(AuditRow(name, status, detail, _fmt(witness)))

    m = model.market
    add("market-rank", True, f"{m.B.size} assets, volatility condition number {np.linalg.cond(m.sigma):.3g}")
    k = model.kernel
    add("kernel-atomless", k.sd > 0, f"ln rho ~ N({k.mu:.6g}, {k.sd:.6g}^2); unbounded above")

    grid = np.geomspace(1e-6, 1e6, 64)
    rep = validate_utility(model.utility, grid)
    shape = [c for c in rep.checks if c.name != "risk-aversion-tail"]
    bad = [c for c in shape if not c.passed]
    add("utility-shape", not bad, "; ".join(c.detail or c.name for c in (bad or shape)), bad[0].witness if bad else None)
    tail = rep["risk-aversion-tail"]
    add("risk-aversion-tail", tail.passed, tail.detail or "relative risk aversion bounded away from 0", tail.witness)

    zgrid = np.linspace(1e-3, 1 - 1e-3, 400)
    for side, t in (("distortion-gain", model.t_plus), ("distortion-loss", model.t_minus)):
        r = validate_distortion(t, zgrid)
        fails = r.failures()
        add(side, not fails, t.name if not fails else "; ".join(c.detail or c.name for c in fails),
            fails[0].witness if fails else None)

    if model.utility.is_crra:
        try:
            val = phi(model, INF)
            add("gain-integrability", math.isfinite(val), f"phi(inf) = {val:.6g}")
        except IntegrabilityError as exc:
            add("gain-integrability", False, f"phi diverges: {exc}")
    else:
        add("gain-integrability", True, "not checked for general utilities")

    mono = monotonicity_check(k, model.t_plus, 400)
    add("quantile-monotonicity", bool(mono),
        "F^-1(z)/T_plus'(z) nondecreasing" if mono else "F^-1(z)/T_plus'(z) decreases",
        mono.first_violation)
    trap = undistorted_loss_trap(model)
    add("loss-distortion-trap", not trap,
        "loss distortion is not the identity" if not trap
        else "warning: T_minus is the identity with unbounded u_plus and rho; the problem is ill-posed")
    return rows


def audit_passed(rows) -> bool:
    return all(r.status != "fail" for r in rows)
