"""Finite-state brute-force verification of the continuous solver."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from ._numerics import golden_min
from .errors import DomainError
from .kernel import INF, PricingKernel


@dataclass(frozen=True, eq=False)
class StateEconomy:
    """Finitely many states with kernel values rho (ascending) and probabilities p."""

    rho: np.ndarray
    p: np.ndarray
    edges: np.ndarray = None  # band limits in rho-space, len n+1, when built from a kernel

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=float)
        p = np.asarray(self.p, dtype=float)
        if rho.shape != p.shape or rho.ndim != 1:
            raise DomainError("rho and p must be matching 1-D arrays")
        if abs(p.sum() - 1.0) > 1e-12 or np.any(p <= 0):
            raise DomainError("probabilities must be positive and sum to 1")
        if np.any(np.diff(rho) <= 0) or rho[0] <= 0:
            raise DomainError("rho must be positive and strictly increasing")
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "p", p)

    @property
    def n(self):
        return self.rho.size

    def price(self, x):
        return float(np.sum(self.p * self.rho * np.asarray(x, dtype=float)))


def discretize(k: PricingKernel, n: int, scheme: str = "equal-prob") -> StateEconomy:
    """Quantile bands of rho, each represented by its conditional mean."""
    if n < 8:
        raise DomainError("need at least 8 states")
    if scheme == "equal-prob":
        z = np.arange(1, n) / n
        s_cut = ndtri(z)
    elif scheme == "stratified-tail":
        # cuts equally spaced in the normal score: thin bands in both tails
        s_cut = np.linspace(-4.0, 4.0, n - 1)
    else:
        raise DomainError(f"unknown scheme {scheme!r}")
    edges = np.concatenate(([0.0], k.from_state(s_cut), [INF]))
    lo_s = np.concatenate(([-INF], s_cut))
    hi_s = np.concatenate((s_cut, [INF]))
    if scheme == "equal-prob":
        p = np.full(n, 1.0 / n)
    else:
        # upper-tail form above the median avoids cancellation
        p = np.where(hi_s <= 0, ndtr(hi_s) - ndtr(lo_s), ndtr(-lo_s) - ndtr(-hi_s))
        p = p / p.sum()
    mass = k.partial_power_moment(1.0, edges[:-1], edges[1:])
    rho = mass / p
    return StateEconomy(rho=rho, p=p, edges=edges)


# ------------------------------------------------------------ preferences


@dataclass(frozen=True, eq=False)
class Preferences:
    utility: object
    t_plus: object
    t_minus: object


@dataclass(frozen=True)
class OracleConfig:
    x_grid: int = 400
    doublings: int = 10
    local_search: bool = True
    deltas: tuple = (1e-1, 1e-2, 1e-3, 1e-4)
    improvement_tol: float = 1e-3
    value_bound: float = math.inf


@dataclass
class OracleResult:
    value: float
    claim: np.ndarray
    m: int  # number of gain states (lowest rho first)
    j: int  # first loss state; n when there are no losses
    x_plus: float
    loss_level: float
    ill_posed: bool
    escalation: np.ndarray  # best value with x_plus capped at 2^k (1 + |x0|)
    local_gain: float = 0.0  # relative improvement found by the local search
    local_flag: bool = False


def discrete_cpt_value(e: StateEconomy, prefs: Preferences, x) -> float:
    """Rank-dependent value: gains weighted by T_plus of decumulative probabilities, losses by T_minus."""
    x = np.asarray(x, dtype=float)
    u = prefs.utility
    total = 0.0
    gains = x > 0
    if gains.any():
        order = np.argsort(-x[gains], kind="stable")
        v, p = x[gains][order], e.p[gains][order]
        cum = np.minimum(np.cumsum(p), 1.0)
        w = np.diff(np.concatenate(([0.0], np.asarray(prefs.t_plus.value(cum), dtype=float))))
        total += float(np.sum(np.asarray(u.u_plus(v), dtype=float) * w))
    losses = x < 0
    if losses.any():
        order = np.argsort(x[losses], kind="stable")
        v, p = -x[losses][order], e.p[losses][order]
        cum = np.minimum(np.cumsum(p), 1.0)
        w = np.diff(np.concatenate(([0.0], np.asarray(prefs.t_minus.value(cum), dtype=float))))
        total -= float(np.sum(np.asarray(u.u_minus(v), dtype=float) * w))
    return total


# --------------------------------------------------------- structured search


def _gain_blocks(e, t_plus):
    """Pooled blocks of the gain problem on each prefix of states.

    With decision weights w_i = T(P_i) - T(P_{i-1}) the first-order condition
    is u'(x_i) = lambda p_i rho_i / w_i. Monotone gains need that ratio
    nondecreasing in i; adjacent violators are pooled. The stack after i
    states is the pooled solution for that prefix.
    """
    cum = np.minimum(np.cumsum(e.p), 1.0)
    tw = np.diff(np.concatenate(([0.0], np.asarray(t_plus.value(cum), dtype=float))))
    a = e.p * e.rho
    stack = []  # (first index, price mass, weight mass)
    snapshots = [()]
    for i in range(e.n):
        blk = [i, a[i], tw[i]]
        while stack and stack[-1][1] / stack[-1][2] >= blk[1] / blk[2]:
            j, am, wm = stack.pop()
            blk = [j, am + blk[1], wm + blk[2]]
        stack.append(blk)
        snapshots.append(tuple(tuple(b) for b in stack))
    return snapshots


def _suffix_sums(e):
    q = np.cumsum(e.p[::-1])[::-1]
    mass = np.cumsum((e.p * e.rho)[::-1])[::-1]
    return np.minimum(q, 1.0), mass


class _Search:
    """Values f(m, x_plus) of the structured claims, vectorized over x_plus."""

    def __init__(self, e, prefs, x0):
        self.e, self.prefs, self.x0 = e, prefs, float(x0)
        self.u = prefs.utility
        self.blocks = _gain_blocks(e, prefs.t_plus)
        self.q, self.mass = _suffix_sums(e)
        self.tq = np.asarray(prefs.t_minus.value(self.q), dtype=float)
        self.crra = bool(getattr(self.u, "is_crra", False))
        if self.crra:
            al = self.u.alpha
            ex = 1.0 / (1.0 - al)
            self.s = np.array([sum(am * (am / wm) ** (-ex) for _, am, wm in b) for b in self.blocks])
            with np.errstate(divide="ignore"):
                w = self.tq / self.mass**al
            # best loss threshold for each m: min over j >= m
            self.best_j = np.empty(e.n + 1, dtype=int)
            self.best_w = np.empty(e.n + 1)
            run_j, run_w = e.n, math.inf
            for j in range(e.n - 1, -1, -1):
                if w[j] <= run_w:
                    run_j, run_w = j, w[j]
                self.best_j[j], self.best_w[j] = run_j, run_w
            self.best_j[e.n], self.best_w[e.n] = e.n, math.inf

    # gains -------------------------------------------------------------
    def _levels(self, m, lam):
        """Gain level of each block for multipliers lam (shape k) -> (k, blocks)."""
        b = self.blocks[m]
        r = np.array([am / wm for _, am, wm in b])
        with np.errstate(all="ignore"):
            return np.asarray(self.u.inv_du_plus(np.outer(lam, r)), dtype=float)

    def _lambda_for(self, m, xp):
        """Multipliers giving gain budgets xp on prefix m, by bisection in ln(lambda)."""
        am = np.array([a for _, a, _ in self.blocks[m]])
        xp = np.asarray(xp, dtype=float)
        lo = np.full(xp.shape, -700.0)
        hi = np.full(xp.shape, 700.0)
        for _ in range(90):
            mid = 0.5 * (lo + hi)
            budget = self._levels(m, np.exp(mid)) @ am
            big = budget > xp
            lo, hi = np.where(big, mid, lo), np.where(big, hi, mid)
        return np.exp(0.5 * (lo + hi))

    def gain_value(self, m, xp):
        xp = np.atleast_1d(np.asarray(xp, dtype=float))
        if m == 0:
            return np.where(xp > 0, -np.inf, 0.0)
        if self.crra:
            al = self.u.alpha
            return self.s[m] ** (1 - al) * xp**al
        out = np.zeros_like(xp)
        pos = xp > 0
        if pos.any():
            lam = self._lambda_for(m, xp[pos])
            wm = np.array([w for _, _, w in self.blocks[m]])
            out[pos] = np.asarray(self.u.u_plus(self._levels(m, lam)), dtype=float) @ wm
        return out

    def gain_claim(self, m, xp):
        x = np.zeros(self.e.n)
        if m == 0 or xp <= 0:
            return x
        if self.crra:
            ex = 1.0 / (1.0 - self.u.alpha)
            b = self.blocks[m]
            lev = np.array([(am / wm) ** (-ex) for _, am, wm in b]) * xp / self.s[m]
        else:
            lev = self._levels(m, self._lambda_for(m, np.array([xp])))[0]
        starts = [s for s, _, _ in self.blocks[m]] + [m]
        for k in range(len(lev)):
            x[starts[k]:starts[k + 1]] = lev[k]
        return x

    # losses ------------------------------------------------------------
    def loss_cost(self, m, xp):
        """min over thresholds j >= m of u_minus((xp - x0)/mass_j) T_minus(q_j); returns (cost, j)."""
        xp = np.atleast_1d(np.asarray(xp, dtype=float))
        need = xp - self.x0
        n = self.e.n
        if m >= n:
            return np.where(np.abs(need) <= 1e-15 * (1 + abs(self.x0)), 0.0, np.inf), np.full(xp.shape, n)
        if self.crra:
            cost = np.where(need > 0, self.u.k_minus * np.maximum(need, 0.0) ** self.u.alpha * self.best_w[m], 0.0)
            return cost, np.where(need > 0, self.best_j[m], n)
        with np.errstate(all="ignore"):
            lv = np.maximum(need, 0.0)[:, None] / self.mass[None, m:]
            c = np.asarray(self.u.u_minus(lv), dtype=float) * self.tq[None, m:]
        j = np.argmin(c, axis=1)
        cost = c[np.arange(len(xp)), j]
        return np.where(need > 0, cost, 0.0), np.where(need > 0, j + m, n)

    def value(self, m, xp):
        xp = np.atleast_1d(np.asarray(xp, dtype=float))
        v = self.gain_value(m, xp) - self.loss_cost(m, xp)[0]
        return np.where(xp >= max(self.x0, 0.0) - 1e-15, v, -np.inf)

    def assemble(self, m, xp):
        x = self.gain_claim(m, xp)
        _, j = self.loss_cost(m, np.array([xp]))
        j = int(j[0])
        level = 0.0
        if j < self.e.n:
            level = (xp - self.x0) / self.mass[j]
            x[j:] = -level
        return x, j, level


def brute_force_master(e: StateEconomy, prefs: Preferences, x0: float, config: OracleConfig = OracleConfig()) -> OracleResult:
    """Structured search over (m, x_plus) with an escalating budget cap, then a local search."""
    if e.n > 400:
        raise DomainError("the oracle is meant for at most 400 states")
    x0 = float(x0)
    sr = _Search(e, prefs, x0)
    floor = max(x0, 0.0)
    scale = 1.0 + abs(x0)
    caps = scale * 2.0 ** np.arange(config.doublings + 1)
    grid = np.unique(np.concatenate(([floor], floor + np.geomspace(1e-9 * scale, caps[-1] - floor, config.x_grid), caps[caps >= floor])))
    n = e.n
    table = np.full((n + 1, grid.size), -np.inf)
    for m in range(n + 1):
        if m == 0 and x0 > 0:
            continue
        if m == n:
            if x0 >= 0:
                table[m, 0] = float(sr.value(m, np.array([x0]))[0]) if x0 > 0 else 0.0
            continue
        table[m] = sr.value(m, grid)
    escalation = np.array([table[:, grid <= cap + 1e-12].max() for cap in caps])
    rising = np.diff(escalation) > 1e-9 * np.maximum(1.0, np.abs(escalation[:-1]))
    ill_posed = bool(rising.all()) or escalation[-1] > config.value_bound

    # refine the best cell of each of the leading split indices (lowest m wins ties)
    flat = np.argsort(-table.max(axis=1), kind="stable")[:3]
    best = (-math.inf, 0, floor)
    for m in flat:
        row = table[m]
        i = int(np.argmax(row))
        if not np.isfinite(row[i]):
            continue
        cand = [(float(row[i]), int(m), float(grid[i]))]
        if m < n and 0 < i < grid.size - 1:
            xs, fv = golden_min(lambda v: -float(sr.value(m, np.array([v]))[0]), float(grid[i - 1]), float(grid[i + 1]), tol=1e-13)
            cand.append((-fv, int(m), float(xs)))
        for c in cand:
            if best[0] == -math.inf or c[0] > best[0] + 1e-15 * max(1.0, abs(best[0])):
                best = c
    value, m, xp = best
    claim, j, level = sr.assemble(m, xp)
    res = OracleResult(value, claim, m, j, xp, level, ill_posed, escalation)
    if config.local_search and not ill_posed:
        _local_search(e, prefs, res, config)
    return res


def _local_search(e, prefs, res, config):
    """Coordinate perturbations with budget re-projection onto a neighboring state."""
    x = res.claim.copy()
    start = discrete_cpt_value(e, prefs, x)
    cur = start
    a = e.p * e.rho
    scale = max(float(np.max(np.abs(x))), 1e-3)
    for d in config.deltas:
        step = d * scale
        for i in range(e.n):
            for sgn in (1.0, -1.0):
                for j in (i - 1, i + 1):
                    if not 0 <= j < e.n:
                        continue
                    y = x.copy()
                    y[i] += sgn * step
                    y[j] -= sgn * step * a[i] / a[j]
                    v = discrete_cpt_value(e, prefs, y)
                    if v > cur + 1e-14 * max(1.0, abs(cur)):
                        x, cur = y, v
    res.local_gain = (cur - start) / max(abs(start), 1e-12)
    res.local_flag = res.local_gain > config.improvement_tol
    return x


def exhaustive_arrangement_check(e: StateEconomy, values) -> tuple:
    """Cheapest price over all permutations of values vs the anti-comonotone arrangement (n <= 8)."""
    import itertools

    if e.n > 8:
        raise DomainError("exhaustive permutation check is limited to 8 states")
    values = np.asarray(values, dtype=float)
    a = e.p * e.rho
    cheapest = min(float(np.dot(a, np.array(perm))) for perm in itertools.permutations(values))
    anti = float(np.dot(a, np.sort(values)[::-1]))
    return cheapest, anti


# ------------------------------------------------------------ structure


def verify_structure(e: StateEconomy, prefs: Preferences, claim, rtol: float = 1e-9):
    """Report on the four structural properties of an optimal claim on a finite state space."""
    from .preferences import Check, ValidationReport

    x = np.asarray(claim, dtype=float)
    if x.shape != (e.n,):
        raise DomainError("claim must have one entry per state")
    checks = []
    xp = np.maximum(x, 0.0)
    tol = rtol * max(1.0, float(np.max(np.abs(x))))
    up = np.nonzero(np.diff(xp) > tol)[0]
    checks.append(Check(
        "gains-nonincreasing", up.size == 0,
        "gains fall as rho rises" if up.size == 0 else f"gain rises from state {up[0]} to {up[0] + 1}",
        None if up.size == 0 else (int(up[0]), int(up[0] + 1)),
    ))
    x_plus = e.price(xp)
    zeros = np.nonzero(x == 0)[0]
    ok = x_plus <= 0 or zeros.size == 0
    checks.append(Check(
        "gains-positive", bool(ok),
        "no zero-payoff states" if ok else f"state {zeros[0]} pays exactly zero while x_plus = {x_plus:.6g}",
        None if ok else int(zeros[0]),
    ))
    neg = np.nonzero(x < 0)[0]
    ok_loss, witness, detail = True, None, "no losses"
    if neg.size:
        lv = -x[neg]
        if np.max(lv) - np.min(lv) > rtol * np.max(lv):
            ok_loss, witness, detail = False, (int(neg[np.argmin(lv)]), int(neg[np.argmax(lv)])), "more than one loss level"
        elif neg[-1] != e.n - 1 or np.any(np.diff(neg) != 1):
            ok_loss, witness, detail = False, int(neg[0]), "loss states are not an upper set of rho"
        else:
            detail = f"single loss level {lv[0]:.6g} on states {neg[0]}..{e.n - 1}"
    checks.append(Check("single-loss-level", ok_loss, detail, witness))
    pos = np.nonzero(x > 0)[0]
    ok_low = pos.size == 0 or (pos[0] == 0 and np.all(np.diff(pos) == 1))
    checks.append(Check(
        "gain-event-lower-set", bool(ok_low),
        "gain states are the lowest-rho states" if ok_low else "gain states are not a lower set of rho",
        None if ok_low else int(pos[np.argmax(np.diff(np.concatenate(([-1], pos))) != 1)]),
    ))
    return ValidationReport("claim structure", checks)
