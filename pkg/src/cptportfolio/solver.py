"""Optimal terminal claims for the CPT portfolio problem.

The problem splits into a gain part (a Choquet maximization on {rho <= c})
and a loss part (a corner claim on {rho > c}); the master program then picks
the threshold c and the gain budget x_plus. Two-piece CRRA utilities have a
closed-form fast path through phi(c) and k(c); general utilities go through
a nested numerical search.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr, ndtri

from ._numerics import S_MAX, expect_normal, golden_min, parallel_map
from .choquet import QuantileFn, choquet_value_quantile
from .errors import DomainError, EvaluationError, IntegrabilityError, RegimeError
from .kernel import INF, MarketParams, PricingKernel, kernel_from_market
from .preferences import (
    ConstructedReversedS,
    Distortion,
    Identity,
    PowerHead,
    SShapedUtility,
    Tabulated,
    monotonicity_check,
    tprime_at_state,
)

# standardized-state range of the default c-grid: quantiles 1e-6 .. 1 - 1e-6
GRID_S = float(-ndtri(1e-6))
PROBE_S = float(-ndtri(1e-8))
BORDERLINE_BAND = 1e-6


class Tag(str, Enum):
    ATTAINED = "WellPosedAttained"
    UNATTAINED = "WellPosedUnattained"
    ILL_POSED = "IllPosed"
    BORDERLINE = "Borderline"
    UNKNOWN = "Unknown"


@dataclass(frozen=True, eq=False)
class BehavioralModel:
    market: MarketParams
    kernel: PricingKernel
    utility: SShapedUtility
    t_plus: Distortion
    t_minus: Distortion
    x0: float
    waived: tuple = ()

    @classmethod
    def build(cls, market, utility, t_plus, t_minus, x0, waived=()):
        return cls(market, kernel_from_market(market), utility, t_plus, t_minus, float(x0), tuple(waived))

    def with_x0(self, x0):
        return BehavioralModel(self.market, self.kernel, self.utility, self.t_plus, self.t_minus, float(x0), self.waived)


@dataclass(frozen=True, eq=False)
class TerminalClaim:
    """X* = gain_profile(rho) on {rho <= c_star}, -loss_level on {rho > c_star}."""

    c_star: float
    x_plus_star: float
    lambda_star: Optional[float]
    gain_profile: Callable
    loss_level: float
    budget_residual: float = float("nan")

    def payoff(self, rho):
        rho = np.asarray(rho, dtype=float)
        gain = np.where(rho <= self.c_star, self.gain_profile(np.minimum(rho, self.c_star if self.c_star < INF else rho)), 0.0)
        out = np.where(rho <= self.c_star, gain, -self.loss_level)
        return float(out) if out.ndim == 0 else out


@dataclass
class Classification:
    tag: Tag
    value: float
    claim: Optional[TerminalClaim] = None
    diagnostic: str = ""
    inf_k: float = float("nan")
    c_inf_k: float = float("nan")
    curve: Optional["KCurve"] = None


@dataclass
class PositivePart:
    lam: Optional[float]
    v_plus: float
    x_plus: float
    c: float
    gain_profile: Callable


@dataclass
class NegativePart:
    c_bar: float
    loss_level: float
    v_minus: float
    attained: bool


# ------------------------------------------------------------- helpers


def _require_crra(model):
    if not model.utility.is_crra:
        raise RegimeError("this closed form needs a two-piece CRRA utility")
    return model.utility.alpha, model.utility.k_minus


def _state(model, c):
    if c == INF:
        return math.inf
    if c <= 0:
        return -math.inf
    return float(model.kernel.state(c))


def _kinks(model):
    """Standardized states where T_plus' has a kink or jump."""
    t = model.t_plus
    if isinstance(t, ConstructedReversedS):
        return (float(model.kernel.state(t.c0)),)
    if isinstance(t, PowerHead):
        return (float(ndtri(t.knot)),)
    if isinstance(t, Tabulated):
        return tuple(float(v) for v in ndtri(t.p[1:-1]))
    return ()


def _log_tprime(model, s):
    with np.errstate(divide="ignore"):
        return np.log(tprime_at_state(model.t_plus, s))


def upper_mass(model, c):
    """E[rho 1{rho > c}]."""
    return model.kernel.partial_power_moment(1.0, c, INF)


def _t_minus_tail(model, c):
    """T_minus(1 - F(c))."""
    if c == INF:
        return 0.0
    if c <= 0:
        return 1.0
    return float(model.t_minus.value(model.kernel.sf(c)))


# --------------------------------------------------------------- phi, k, G


def _phi_piece(model, lo, hi):
    alpha, _ = _require_crra(model)
    e = 1.0 / (1.0 - alpha)
    k = model.kernel
    beta = 1.0 - e
    pts = (*_kinks(model), beta * k.sd)

    def logf(s):
        return e * _log_tprime(model, s) + beta * (k.mu + k.sd * s)

    return expect_normal(logf, lo=lo, hi=hi, points=pts, log=True)


def phi(model: BehavioralModel, c: float) -> float:
    """E[(T_plus'(F(rho))/rho)^(1/(1-alpha)) rho 1{rho <= c}].

    Raises IntegrabilityError when the expectation diverges.
    """
    if c < 0:
        raise DomainError("c must be nonnegative")
    if c == 0:
        return 0.0
    return _phi_piece(model, -math.inf, _state(model, c))


def k_of_c(model: BehavioralModel, c: float, phi_c: Optional[float] = None) -> float:
    """k(c) = k_minus T_minus(1-F(c)) / (phi(c)^(1-alpha) E[rho 1{rho>c}]^alpha); inf when phi(c) = 0."""
    alpha, k_minus = _require_crra(model)
    if not 0 < c < INF:
        raise DomainError("k(c) needs 0 < c < inf")
    ph = phi(model, c) if phi_c is None else phi_c
    if ph <= 0:
        return math.inf
    return k_minus * _t_minus_tail(model, c) / (ph ** (1 - alpha) * upper_mass(model, c) ** alpha)


def g_of_c(model: BehavioralModel, c: float, phi_c: Optional[float] = None) -> float:
    """(k_minus T_minus(1-F(c)) / E[rho 1{rho>c}]^alpha)^(1/(1-alpha)) - phi(c), with phi(0) = 0."""
    alpha, k_minus = _require_crra(model)
    if c == INF:
        return math.inf
    ph = 0.0 if c <= 0 else (phi(model, c) if phi_c is None else phi_c)
    lead = (k_minus * _t_minus_tail(model, c) / upper_mass(model, c) ** alpha) ** (1 / (1 - alpha))
    return lead - ph


@dataclass
class KCurve:
    """k(c) and G(c) on a grid of thresholds uniform in the standardized state."""

    s: np.ndarray
    c: np.ndarray
    phi: np.ndarray
    k: np.ndarray
    G: np.ndarray
    phi_inf: float


def k_curve(model: BehavioralModel, grid_n: int = 512, s_max: float = GRID_S, probes=(PROBE_S,)) -> KCurve:
    alpha, k_minus = _require_crra(model)
    core = np.linspace(-s_max, s_max, grid_n)
    extra = np.array(sorted(set(probes) | {-p for p in probes}))
    s = np.unique(np.concatenate((core, extra)))
    c = model.kernel.from_state(s)
    # cumulative phi: one quadrature per grid cell, then a running sum
    lows = np.concatenate(([-math.inf], s[:-1]))
    pieces = parallel_map(lambda ab: _phi_piece(model, ab[0], ab[1]), list(zip(lows, s)))
    ph = np.cumsum(pieces)
    phi_inf = float(ph[-1] + _phi_piece(model, float(s[-1]), math.inf))
    tm = np.asarray(model.t_minus.value(model.kernel.sf(c)), dtype=float)
    m = upper_mass(model, c)
    with np.errstate(divide="ignore", over="ignore"):
        k = k_minus * tm / (ph ** (1 - alpha) * m**alpha)
        G = (k_minus * tm / m**alpha) ** (1 / (1 - alpha)) - ph
    return KCurve(s=s, c=c, phi=ph, k=k, G=G, phi_inf=phi_inf)


# -------------------------------------------------------- structural checks


def _is_identity(t: Distortion) -> bool:
    if isinstance(t, Identity):
        return True
    z = np.linspace(0.01, 0.99, 99)
    return bool(np.allclose(np.asarray(t.value(z), dtype=float), z, rtol=0, atol=1e-12))


def _gain_utility_unbounded(u: SShapedUtility) -> bool:
    if u.is_crra:
        return True
    a, b, c = (float(u.u_plus(x)) for x in (1e6, 1e9, 1e12))
    # steady or growing increments over equal log-steps suggest u(inf) = inf
    return (c - b) >= 0.5 * (b - a) > 0


def undistorted_loss_trap(model: BehavioralModel) -> bool:
    """Unbounded u_plus, unbounded rho and T_minus(p) = p: the loss side cannot discipline leverage."""
    return _is_identity(model.t_minus) and _gain_utility_unbounded(model.utility)


# ------------------------------------------------------------ claims


def _crra_profile(model, x_plus, ph):
    alpha = model.utility.alpha
    e = 1.0 / (1.0 - alpha)
    k = model.kernel
    scale = x_plus / ph

    def profile(rho):
        rho = np.asarray(rho, dtype=float)
        s = k.state(rho)
        with np.errstate(all="ignore"):
            out = scale * np.exp(e * _log_tprime(model, s) - e * np.log(rho))
        return float(out) if out.ndim == 0 else out

    return profile


def _general_profile(model, lam):
    k = model.kernel
    u = model.utility

    def profile(rho):
        rho = np.asarray(rho, dtype=float)
        with np.errstate(all="ignore"):
            out = u.inv_du_plus(lam * rho / tprime_at_state(model.t_plus, k.state(rho)))
        out = np.asarray(out, dtype=float)
        return float(out) if out.ndim == 0 else out

    return profile


def _zero_profile(rho):
    rho = np.asarray(rho, dtype=float)
    out = np.zeros_like(rho)
    return float(out) if out.ndim == 0 else out


def price_claim(model: BehavioralModel, claim: TerminalClaim) -> float:
    """E[rho X*] by quadrature of the gain profile plus the closed-form loss leg."""
    k = model.kernel
    s_c = _state(model, claim.c_star)
    gain = 0.0
    if claim.x_plus_star > 0 and s_c > -math.inf:
        def logf(s):
            rho = math.exp(k.mu + k.sd * s)
            v = float(claim.gain_profile(rho))
            return math.log(v) + math.log(rho) if v > 0 else -math.inf

        gain = expect_normal(logf, hi=s_c, points=_kinks(model), log=True)
    loss = claim.loss_level * upper_mass(model, claim.c_star) if claim.c_star < INF else 0.0
    return gain - loss


def claim_value(model: BehavioralModel, claim: TerminalClaim) -> float:
    """V(X*) = V_plus(X*^+) - V_minus(X*^-), evaluated through the quantile form of the gains."""
    k = model.kernel
    v_minus = 0.0
    if claim.c_star < INF and claim.loss_level > 0:
        v_minus = float(model.utility.u_minus(claim.loss_level)) * _t_minus_tail(model, claim.c_star)
    if claim.x_plus_star <= 0 or claim.c_star <= 0:
        return -v_minus
    w_c = 0.0 if claim.c_star == INF else float(k.sf(claim.c_star))

    # gains fall in rho, so the z-quantile of X^+ sits at P(rho > x) = z
    def g(z):
        z = np.asarray(z, dtype=float)
        with np.errstate(all="ignore"):
            out = np.where(z > w_c, claim.gain_profile(k.upper_quantile(np.clip(z, 1e-300, 1 - 1e-16))), 0.0)
        return out

    def g_up(w):
        w = np.asarray(w, dtype=float)
        with np.errstate(all="ignore"):
            return np.where(1 - w > w_c, claim.gain_profile(k.quantile(np.clip(w, 1e-300, 0.5))), 0.0)

    q = QuantileFn(fn=g, upper=g_up, jumps=(w_c,) if 0 < w_c < 1 else ())
    v_plus = choquet_value_quantile(q, model.utility.u_plus, model.t_plus, atol=1e-11, rtol=1e-11)
    return v_plus - v_minus


def _finish(model, claim):
    res = price_claim(model, claim) - model.x0
    return TerminalClaim(claim.c_star, claim.x_plus_star, claim.lambda_star, claim.gain_profile, claim.loss_level, res)


def _crra_claim(model, c, x_plus, ph):
    alpha = model.utility.alpha
    if x_plus <= 0:
        lam, profile = None, _zero_profile
    else:
        lam = alpha * (x_plus / ph) ** (alpha - 1)
        profile = _crra_profile(model, x_plus, ph)
    loss = 0.0 if c == INF else (x_plus - model.x0) / upper_mass(model, c)
    return _finish(model, TerminalClaim(c, x_plus, lam, profile, loss))


# ---------------------------------------------------------- positive part


def solve_positive_part(model: BehavioralModel, c: float, x_plus: float, method: str = "auto") -> PositivePart:
    """Best gain claim on {rho <= c} costing x_plus."""
    if x_plus < max(model.x0, 0.0) - 1e-12 * (1 + abs(model.x0)):
        raise DomainError("x_plus must be at least max(x0, 0)")
    if x_plus == 0:
        return PositivePart(None, 0.0, 0.0, c, _zero_profile)
    if c <= 0:
        return PositivePart(None, -math.inf, x_plus, c, _zero_profile)
    if method == "auto":
        method = "crra" if model.utility.is_crra else "general"
    if method == "crra":
        alpha, _ = _require_crra(model)
        ph = phi(model, c)
        lam = alpha * (x_plus / ph) ** (alpha - 1)
        return PositivePart(lam, ph ** (1 - alpha) * x_plus**alpha, x_plus, c, _crra_profile(model, x_plus, ph))
    lam = _solve_lambda(model, c, x_plus)
    v = _gain_value(model, c, lam)
    return PositivePart(lam, v, x_plus, c, _general_profile(model, lam))


def _gain_budget(model, c, lam, rtol=1e-12):
    k = model.kernel
    u = model.utility

    def f(s):
        rho = math.exp(k.mu + k.sd * s)
        return rho * float(u.inv_du_plus(lam * rho / tprime_at_state(model.t_plus, s)))

    return expect_normal(f, hi=_state(model, c), points=_kinks(model), rtol=rtol)


def _gain_value(model, c, lam, rtol=1e-12):
    k = model.kernel
    u = model.utility

    def f(s):
        rho = math.exp(k.mu + k.sd * s)
        tp = tprime_at_state(model.t_plus, s)
        return float(u.u_plus(u.inv_du_plus(lam * rho / tp))) * tp

    return expect_normal(f, hi=_state(model, c), points=_kinks(model), rtol=rtol)


def _solve_lambda(model, c, x_plus, rtol=1e-10):
    """Budget in lambda is continuous and strictly decreasing: bracket, then root-find on ln(lambda)."""
    def gap(ll):
        return math.log(_gain_budget(model, c, math.exp(ll))) - math.log(x_plus)

    lo = hi = math.log(float(model.utility.du_plus(x_plus)))
    samples = []
    g_lo = g_hi = gap(lo)
    samples.append((lo, g_lo))
    step = 1.0
    for _ in range(200):
        if g_lo > 0 and g_hi < 0:
            break
        if g_lo <= 0:
            lo -= step
            g_lo = gap(lo)
            samples.append((lo, g_lo))
        if g_hi >= 0:
            hi += step
            g_hi = gap(hi)
            samples.append((hi, g_hi))
        step *= 2.0
    else:
        raise EvaluationError(f"could not bracket the multiplier; budget samples {samples[-6:]}")
    if g_lo == 0:
        return math.exp(lo)
    ll = brentq(gap, lo, hi, xtol=1e-14, rtol=1e-15, maxiter=200)
    lam = math.exp(ll)
    budget = _gain_budget(model, c, lam)
    if abs(budget - x_plus) > rtol * x_plus * 10:
        raise EvaluationError(f"budget {budget} misses {x_plus}")
    return lam


# ---------------------------------------------------------- negative part


def solve_negative_part(model: BehavioralModel, c: float, x_plus: float, grid_n: int = 512) -> NegativePart:
    """Cheapest-to-bear loss: a single level on {rho > c_bar}, c_bar >= c."""
    u = model.utility
    if not getattr(u, "loss_strictly_concave", True):
        raise RegimeError("loss utility is not strictly concave at 0; corner form not guaranteed")
    x0 = model.x0
    if x_plus < x0:
        raise DomainError("x_plus below x0 leaves a negative loss budget")
    if x_plus == x0:
        return NegativePart(c, 0.0, 0.0, True)
    if c == INF:
        raise DomainError("losses need c < inf when x_plus > x0")
    need = x_plus - x0
    k = model.kernel

    def h(s):
        cb = float(k.from_state(s))
        return float(u.u_minus(need / upper_mass(model, cb))) * _t_minus_tail(model, cb)

    s_c = _state(model, c)
    lo = max(s_c, -GRID_S)
    grid = np.linspace(lo, max(GRID_S, lo + 1.0), grid_n)
    if s_c > -math.inf:
        grid = np.unique(np.concatenate(([s_c], grid[grid >= s_c])))
    vals = np.array([h(s) for s in grid])
    i = int(np.argmin(vals))
    if i == len(grid) - 1:
        # still falling at the right end: follow the asymptote
        far = np.linspace(grid[-1], S_MAX - 1.0, 64)
        fv = np.array([h(s) for s in far])
        j = int(np.argmin(fv))
        if j == len(far) - 1:
            return NegativePart(INF, 0.0, float(fv[j]), False)
        grid, vals, i = far, fv, j
    a = grid[max(i - 1, 0)]
    b = grid[min(i + 1, len(grid) - 1)]
    s_star, v_star = golden_min(h, a, b, tol=1e-12)
    if v_star > vals[i]:
        s_star, v_star = grid[i], vals[i]
    if c <= 0 and s_star <= -GRID_S and h(-S_MAX) <= v_star:
        c_bar = 0.0
        v_star = float(u.u_minus(need / k.mean()))
    else:
        c_bar = float(k.from_state(s_star))
    return NegativePart(c_bar, need / upper_mass(model, c_bar), v_star, True)


# ------------------------------------------------------ classification


def _minimize_g(model, curve, x0):
    """argmin of G over c >= 0: returns (c_star, G_min, attained)."""
    alpha, k_minus = _require_crra(model)
    g0 = (k_minus / model.kernel.mean() ** alpha) ** (1 / (1 - alpha))
    G = curve.G
    i = int(np.argmin(G))
    if i == len(G) - 1:
        # falling into the upper tail: look further out before deciding
        far = np.linspace(curve.s[-1], 12.0, 40)
        fg = np.array([g_of_c(model, float(model.kernel.from_state(s))) for s in far])
        if np.argmin(fg) == len(fg) - 1 and fg[-1] < G[i]:
            return INF, float(min(fg[-1], g0)), False
    if g0 <= G[i]:
        return 0.0, g0, True

    def gs(s):
        return g_of_c(model, float(model.kernel.from_state(s)))

    a = curve.s[max(i - 1, 0)] if i > 0 else -S_MAX + 1.0
    b = curve.s[min(i + 1, len(G) - 1)]
    s_star, g_star = golden_min(gs, float(a), float(b), tol=1e-12)
    if g_star > G[i]:
        s_star, g_star = float(curve.s[i]), float(G[i])
    if g0 <= g_star:
        return 0.0, g0, True
    return float(model.kernel.from_state(s_star)), float(g_star), True


def _refine_inf_k(model, curve):
    """Grid minimum of k, polished by golden search when it sits between two grid points."""
    i = int(np.argmin(curve.k))
    inf_k, c_inf = float(curve.k[i]), float(curve.c[i])
    if 0 < i < len(curve.k) - 1 and np.isfinite(inf_k):
        def ks(s):
            return k_of_c(model, float(model.kernel.from_state(s)))

        s_star, k_star = golden_min(ks, float(curve.s[i - 1]), float(curve.s[i + 1]), tol=1e-10)
        if k_star < inf_k:
            inf_k, c_inf = float(k_star), float(model.kernel.from_state(s_star))
    return inf_k, c_inf


def classify_wellposedness(model: BehavioralModel, grid_n: int = 512, band: float = BORDERLINE_BAND) -> Classification:
    if undistorted_loss_trap(model):
        return Classification(
            Tag.ILL_POSED, math.inf,
            diagnostic="undistorted-loss trap: T_minus is the identity, u_plus is unbounded and rho is unbounded above",
        )
    if not model.utility.is_crra:
        return Classification(Tag.UNKNOWN, float("nan"), diagnostic="general utility: no closed-form decision table")
    mono = monotonicity_check(model.kernel, model.t_plus, 400)
    if not mono and "quantile-monotonicity" not in model.waived:
        return Classification(
            Tag.UNKNOWN, float("nan"),
            diagnostic=f"F^-1(z)/T_plus'(z) is not nondecreasing; first violation {mono.first_violation}",
        )
    alpha, k_minus = model.utility.alpha, model.utility.k_minus
    x0 = model.x0
    try:
        curve = k_curve(model, grid_n)
    except IntegrabilityError as exc:
        return Classification(
            Tag.ILL_POSED, math.inf,
            diagnostic=f"gain-integrability failure: phi diverges, so a finitely priced gain claim has infinite value ({exc})",
        )
    inf_k, c_inf = _refine_inf_k(model, curve)
    common = dict(inf_k=inf_k, c_inf_k=c_inf, curve=curve)
    if abs(inf_k - 1.0) < band:
        return Classification(Tag.BORDERLINE, float("nan"),
                              diagnostic=f"inf k = {inf_k:.9f} lies within {band:g} of 1", **common)
    if x0 >= 0:
        if inf_k >= 1:
            ph = curve.phi_inf
            value = ph ** (1 - alpha) * x0**alpha
            claim = _crra_claim(model, INF, x0, ph)
            return Classification(Tag.ATTAINED, value, claim,
                                  diagnostic="nonnegative endowment with inf k >= 1: all wealth in the gain claim", **common)
        return Classification(Tag.ILL_POSED, math.inf,
                              diagnostic="nonnegative endowment with inf k < 1: leveraged gains outgrow losses", **common)
    if inf_k < 1:
        return Classification(Tag.ILL_POSED, math.inf,
                              diagnostic="negative endowment with inf k < 1: leveraged gains outgrow losses", **common)
    if inf_k == 1:
        return Classification(Tag.UNATTAINED, 0.0, diagnostic="inf k = 1: supremum 0 is not attained", **common)
    c_star, g_min, attained = _minimize_g(model, curve, x0)
    value = -((-x0) ** alpha) * g_min ** (1 - alpha)
    if not attained:
        return Classification(Tag.UNATTAINED, value,
                              diagnostic="negative endowment, inf k > 1, but G(c) keeps falling as c grows", **common)
    if c_star == 0:
        claim = TerminalClaim(0.0, 0.0, None, _zero_profile, -x0 / model.kernel.mean())
        return Classification(Tag.ATTAINED, value, _finish(model, claim),
                              diagnostic="negative endowment: risk-free claim x0/E[rho] is optimal", **common)
    ph = phi(model, c_star)
    kc = k_of_c(model, c_star, ph)
    x_plus = -x0 / (kc ** (1 / (1 - alpha)) - 1)
    claim = _crra_claim(model, c_star, x_plus, ph)
    return Classification(Tag.ATTAINED, value, claim,
                          diagnostic="negative endowment, inf k > 1: gains below c*, single loss level above", **common)


# ------------------------------------------------------------ master


def solve_master(model: BehavioralModel, method: str = "auto", grid_n: int = 512, x_plus_max: Optional[float] = None) -> Classification:
    """Optimal (c*, x_plus*) and the assembled terminal claim."""
    if method == "auto":
        method = "crra" if model.utility.is_crra else "general"
    if method == "crra":
        return classify_wellposedness(model, grid_n)
    if undistorted_loss_trap(model):
        return classify_wellposedness(model)
    if not getattr(model.utility, "loss_strictly_concave", True):
        raise RegimeError("loss utility is not strictly concave at 0; refusing the corner characterization")
    return _solve_general(model, grid_n=min(grid_n, 64), x_plus_max=x_plus_max)


@dataclass
class _Inner:
    value: float
    x_plus: float
    lam: Optional[float]
    unbounded: bool = False


class _StateRule:
    """Fixed Gauss-Legendre rule on {rho <= c} in the standardized state.

    Budget and value become weighted sums, so the inner search can sweep
    many multipliers at once. Results are re-priced adaptively afterwards.
    """

    _x, _w = np.polynomial.legendre.leggauss(40)

    def __init__(self, model, c):
        k = model.kernel
        hi = min(_state(model, c), S_MAX)
        cuts = sorted({-S_MAX, hi, *(p for p in (*_BREAKS_INNER, *_kinks(model)) if -S_MAX < p < hi)})
        nodes, weights = [], []
        for a, b in zip(cuts[:-1], cuts[1:]):
            nodes.append(0.5 * (b - a) * self._x + 0.5 * (a + b))
            weights.append(0.5 * (b - a) * self._w)
        s = np.concatenate(nodes)
        self.w = np.concatenate(weights) * np.exp(-0.5 * s * s) / math.sqrt(2 * math.pi)
        self.rho = np.exp(k.mu + k.sd * s)
        self.tp = np.asarray(tprime_at_state(model.t_plus, s), dtype=float)
        self.u = model.utility

    def budget_and_value(self, lams):
        lams = np.atleast_1d(np.asarray(lams, dtype=float))[:, None]
        with np.errstate(all="ignore"):
            x = np.asarray(self.u.inv_du_plus(lams * self.rho / self.tp), dtype=float)
            budget = (self.w * self.rho * x).sum(axis=1)
            value = (self.w * self.tp * np.asarray(self.u.u_plus(x), dtype=float)).sum(axis=1)
        return budget, value


_BREAKS_INNER = (-20.0, -10.0, -6.0, -4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0, 6.0, 10.0, 20.0)


def _inner(model, c, x_plus_max, n_lam=121):
    """max over x_plus of v_plus(c, x_plus) - u_minus((x_plus - x0)/m(c)) T_minus(1 - F(c)), parametrized by lambda."""
    x0 = model.x0
    u = model.utility
    m = upper_mass(model, c)
    tm = _t_minus_tail(model, c)
    floor = max(x0, 0.0)
    rule = _StateRule(model, c)

    def objective(lls):
        xp, vp = rule.budget_and_value(np.exp(lls))
        with np.errstate(all="ignore"):
            out = vp - np.asarray(u.u_minus(np.maximum(xp - x0, 0.0) / m), dtype=float) * tm
        return np.where(xp >= floor, out, -np.inf), xp

    # bracket ln(lambda) from the budget cap down to a negligible gain budget
    ll_top = math.log(float(u.du_plus(x_plus_max)))
    while rule.budget_and_value([math.exp(ll_top)])[0][0] < x_plus_max:
        ll_top -= 1.0
    ll_bot = ll_top + 1.0
    while rule.budget_and_value([math.exp(ll_bot)])[0][0] > 1e-9 * (1 + floor):
        ll_bot += 2.0
    lls = np.linspace(ll_top, ll_bot, n_lam)
    vals, xps = objective(lls)
    best = _Inner(-float(u.u_minus((floor - x0) / m)) * tm if floor == 0 else -math.inf, floor, None)
    i = int(np.argmax(vals))
    if vals[i] > -math.inf:
        a = float(lls[max(i - 1, 0)])
        b = float(lls[min(i + 1, n_lam - 1)])
        ll, negv = golden_min(lambda v: -float(objective(np.array([v]))[0][0]), a, b, tol=1e-11)
        if -negv < vals[i]:
            ll, negv = float(lls[i]), -float(vals[i])
        if -negv > best.value:
            xp = float(rule.budget_and_value([math.exp(ll)])[0][0])
            best = _Inner(-negv, xp, math.exp(ll), unbounded=(i == 0))
    if floor > 0:
        # x_plus = x0: gains only, no loss budget
        lo, hi = ll_top, ll_bot
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if rule.budget_and_value([math.exp(mid)])[0][0] > floor:
                lo = mid
            else:
                hi = mid
        v0 = float(rule.budget_and_value([math.exp(lo)])[1][0])
        if v0 > best.value:
            best = _Inner(v0, floor, math.exp(lo))
    return best


def _solve_general(model, grid_n, x_plus_max):
    x0 = model.x0
    u = model.utility
    k = model.kernel
    if x_plus_max is None:
        x_plus_max = 1e6 * (1 + abs(x0))
    cands = []
    if x0 >= 0:
        try:
            if x0 > 0:
                lam = _solve_lambda(model, INF, x0)
                cands.append((_gain_value(model, INF, lam), INF, x0, lam))
            else:
                cands.append((0.0, INF, 0.0, None))
        except IntegrabilityError as exc:
            return Classification(Tag.ILL_POSED, math.inf, diagnostic=f"gain-integrability failure: {exc}")
    if x0 <= 0:
        cands.append((-float(u.u_minus(-x0 / k.mean())), 0.0, 0.0, None))
    s_grid = np.linspace(-GRID_S, GRID_S, grid_n)
    try:
        inners = parallel_map(lambda s: _inner(model, float(k.from_state(s)), x_plus_max), s_grid)
    except IntegrabilityError as exc:
        return Classification(Tag.ILL_POSED, math.inf, diagnostic=f"gain-integrability failure: {exc}")
    if any(r.unbounded for r in inners):
        return Classification(
            Tag.ILL_POSED, math.inf,
            diagnostic=f"objective still rising at the gain-budget cap {x_plus_max:g}: unbounded in x_plus",
        )
    vals = np.array([r.value for r in inners])
    i = int(np.argmax(vals))
    a, b = s_grid[max(i - 1, 0)], s_grid[min(i + 1, grid_n - 1)]
    cache = {}

    def neg(s):
        r = _inner(model, float(k.from_state(s)), x_plus_max)
        cache[s] = r
        return -r.value

    s_star, nv = golden_min(neg, float(a), float(b), tol=1e-9)
    best_inner = cache.get(s_star, inners[i])
    if -nv < vals[i]:
        s_star, best_inner = float(s_grid[i]), inners[i]
    c_grid = float(k.from_state(s_star))
    if best_inner.x_plus > 0:
        # re-price the chosen (c, x_plus) with adaptive quadrature
        lam = _solve_lambda(model, c_grid, best_inner.x_plus)
        v = _gain_value(model, c_grid, lam) - float(u.u_minus((best_inner.x_plus - x0) / upper_mass(model, c_grid))) * _t_minus_tail(model, c_grid)
        cands.append((v, c_grid, best_inner.x_plus, lam))
    else:
        cands.append((best_inner.value, c_grid, 0.0, None))
    value, c_star, x_plus, lam = max(cands, key=lambda t: t[0])
    if lam is None or x_plus == 0:
        profile = _zero_profile
    else:
        profile = _general_profile(model, lam)
    loss = 0.0 if c_star == INF else (x_plus - x0) / upper_mass(model, c_star)
    claim = _finish(model, TerminalClaim(c_star, x_plus, lam, profile, loss))
    return Classification(Tag.ATTAINED, value, claim, diagnostic="general utility: nested search over (c, x_plus)")
