"""Wealth and portfolio processes that replicate binary power claims and the optimal claim.

All formulas assume a constant-coefficient market, so rho(t, T) given F_t is
lognormal with mu_t = -(r + |theta|^2/2)(T - t) and sd_t = |theta| sqrt(T - t).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._numerics import expect_normal, normal_pdf
from .errors import DomainError, RegimeError
from .kernel import INF, MarketParams, PricingKernel, kernel_from_market
from .preferences import ConstructedReversedS, Identity

# below this conditional volatility the quadrature is replaced by the closed form
SMALL_SD = 1e-4


@dataclass(frozen=True)
class PathPoint:
    t: float
    rho_t: float

    def __post_init__(self):
        if not self.t >= 0:
            raise DomainError("t must be nonnegative")
        if not self.rho_t > 0:
            raise DomainError("rho_t must be positive")


@dataclass(frozen=True, eq=False)
class WealthPortfolio:
    x: float
    pi: np.ndarray


def _conditional(market: MarketParams, p: PathPoint) -> PricingKernel:
    if p.t >= market.T:
        raise DomainError("need t < T")
    return kernel_from_market(market, p.t)


def _check_band(c1, c2):
    if not (0 <= c1 < c2):
        raise DomainError("need 0 <= c1 < c2")


def binary_power_price(market: MarketParams, a_exp: float, c1: float, c2: float, p: PathPoint, method: str = "quadrature") -> float:
    """Time-t price of rho(T)^a 1{c1 < rho(T) < c2} given rho(t) = rho_t.

    The price is rho_t^a E[rho(t,T)^(a+1); c1/rho_t < rho(t,T) < c2/rho_t].
    method="quadrature" integrates in the standardized log of rho(t,T);
    method="closed" uses lognormal partial moments.
    """
    _check_band(c1, c2)
    k = _conditional(market, p)
    lo, hi = c1 / p.rho_t, (c2 / p.rho_t if c2 < INF else INF)
    if method == "closed" or k.sd < SMALL_SD:
        return p.rho_t**a_exp * float(k.partial_power_moment(a_exp + 1.0, lo, hi))
    if method != "quadrature":
        raise DomainError(f"unknown method {method!r}")
    s_lo = -math.inf if lo == 0 else float(k.state(lo))
    s_hi = math.inf if hi == INF else float(k.state(hi))
    beta = a_exp + 1.0
    shift = a_exp * math.log(p.rho_t) + beta * k.mu

    def logf(s):
        return shift + beta * k.sd * s

    return expect_normal(logf, s_lo, s_hi, rtol=1e-12, points=(beta * k.sd,), log=True)


def _edge_term(c, a_exp, k, rho_t):
    """c^(a+1) psi((ln c - mu_t - ln rho_t)/sd_t), zero at c = 0 and c = inf."""
    if c == 0 or c == INF:
        return 0.0
    d = (math.log(c) - k.mu - math.log(rho_t)) / k.sd
    # combine in logs: c^(a+1) can overflow while psi(d) underflows
    return math.exp((a_exp + 1.0) * math.log(c) - 0.5 * d * d) / math.sqrt(2 * math.pi)


def replicate_binary_power(market: MarketParams, a_exp: float, c1: float, c2: float, p: PathPoint,
                           method: str = "quadrature") -> WealthPortfolio:
    """Wealth and risky allocation replicating rho^a 1{c1 < rho < c2}."""
    _check_band(c1, c2)
    k = _conditional(market, p)
    x = binary_power_price(market, a_exp, c1, c2, p, method=method)
    if k.sd < SMALL_SD:
        # the boundary densities collapse onto the band edges; the delta is the power part
        bracket = a_exp * x
    else:
        edges = _edge_term(c2, a_exp, k, p.rho_t) - _edge_term(c1, a_exp, k, p.rho_t)
        bracket = a_exp * x - edges / (k.sd * p.rho_t)
    pi = -bracket * market.risk_direction()
    return WealthPortfolio(x=x, pi=pi)


def merton_ratio(market: MarketParams, alpha: float) -> np.ndarray:
    """(1 - alpha)^(-1) (sigma sigma')^(-1) B."""
    if not 0 < alpha < 1:
        raise DomainError("alpha must lie in (0, 1); the ratio blows up as alpha -> 1")
    return market.risk_direction() / (1.0 - alpha)


# --------------------------------------------------------------- optimal path


@dataclass(frozen=True)
class PathParts:
    """Pieces of the optimal replication under the reversed-S gain distortion."""

    x1: float
    x2: float
    gamma: float
    c_tilde: float
    e_a: float
    e_b: float
    a: float
    b: float
    alpha: float


def _shape(model):
    """(c0, a, b) of the gain distortion, identity being a = b = 0."""
    t = model.t_plus
    if isinstance(t, Identity):
        return 1.0, 0.0, 0.0
    if isinstance(t, ConstructedReversedS):
        k = model.kernel
        if abs(t.kernel.mu - k.mu) > 1e-12 * (1 + abs(k.mu)) or abs(t.kernel.sd - k.sd) > 1e-12 * k.sd:
            raise RegimeError("gain distortion was built on a different kernel than the market's")
        return t.c0, t.a, t.b
    raise RegimeError("closed-form path needs the reversed-S gain distortion (or the identity)")


def _check_regime(model, classification):
    if not model.utility.is_crra:
        raise RegimeError("closed-form path needs two-piece CRRA utility")
    if model.x0 < 0:
        raise RegimeError("closed-form path needs a nonnegative endowment (x0 >= 0)")
    _shape(model)
    if classification is None:
        from .solver import classify_wellposedness

        classification = classify_wellposedness(model)
    inf_k = classification.inf_k
    if not (inf_k >= 1):
        raise RegimeError(f"closed-form path needs inf k(c) >= 1; estimate is {inf_k:.6g} ({classification.diagnostic})")


def path_parts(model, p: PathPoint) -> PathParts:
    c0, a, b = _shape(model)
    alpha = model.utility.alpha
    e_a = (a - 1.0) / (1.0 - alpha)
    e_b = (b - 1.0) / (1.0 - alpha)
    k0 = model.kernel
    gamma = float(k0.partial_power_moment(e_a + 1.0, 0.0, c0)) + c0 ** ((a - b) / (1 - alpha)) * float(
        k0.partial_power_moment(e_b + 1.0, c0, INF)
    )
    x1 = binary_power_price(model.market, e_a, 0.0, c0, p)
    x2 = binary_power_price(model.market, e_b, c0, INF, p)
    return PathParts(x1, x2, gamma, c0 ** ((a - b) / (1 - alpha)), e_a, e_b, a, b, alpha)


def optimal_path(model, p: PathPoint, classification=None) -> WealthPortfolio:
    """Optimal wealth and risky allocation at (t, rho_t) for x0 >= 0 with inf k >= 1.

    X* = (x0/gamma)[rho^e_a 1{rho <= c0} + c0^((a-b)/(1-alpha)) rho^e_b 1{rho > c0}]
    with e_a = (a-1)/(1-alpha), e_b = (b-1)/(1-alpha). The boundary terms of
    the two binary legs cancel at c0, leaving a linear combination.
    """
    _check_regime(model, classification)
    q = path_parts(model, p)
    scale = model.x0 / q.gamma
    x = scale * (q.x1 + q.c_tilde * q.x2)
    mult = scale * ((1 - q.a) * q.x1 + q.c_tilde * (1 - q.b) * q.x2) / (1 - q.alpha)
    return WealthPortfolio(x=x, pi=mult * model.market.risk_direction())


def risky_ratio(model, p: PathPoint, classification=None) -> np.ndarray:
    """pi*(t)/x*(t) = (1-alpha)^(-1) (1 - (a x1 + b x2~)/(x1 + x2~)) (sigma sigma')^(-1) B, x2~ = c_tilde x2."""
    _check_regime(model, classification)
    if model.x0 == 0:
        raise DomainError("optimal wealth is zero, so the risky ratio is undefined")
    q = path_parts(model, p)
    x2 = q.c_tilde * q.x2
    if q.x1 + x2 <= 0:
        raise DomainError("optimal wealth is zero, so the risky ratio is undefined")
    weight = (q.a * q.x1 + q.b * x2) / (q.x1 + x2)
    return (1.0 - weight) / (1.0 - q.alpha) * model.market.risk_direction()


def underweights(model, p: PathPoint, classification=None) -> bool:
    """True when the risky ratio is below the Merton benchmark, i.e. b x2~ > -a x1."""
    _check_regime(model, classification)
    q = path_parts(model, p)
    return q.b * q.c_tilde * q.x2 > -q.a * q.x1


def conditional_price(model, claim_payoff, p: PathPoint) -> float:
    """E[rho(t,T) X | rho(t) = rho_t] by quadrature over rho(t,T), for an arbitrary payoff of rho(T)."""
    k = _conditional(model.market, p)
    c0, _, _ = _shape(model)
    kink = float(k.state(c0 / p.rho_t))

    def f(s):
        y = math.exp(k.mu + k.sd * s)
        return y * float(claim_payoff(p.rho_t * y))

    return expect_normal(f, points=(kink,), rtol=1e-12)


def optimal_claim_payoff(model):
    """Terminal payoff X*(rho) of the closed-form regime."""
    c0, a, b = _shape(model)
    alpha = model.utility.alpha
    e_a, e_b = (a - 1) / (1 - alpha), (b - 1) / (1 - alpha)
    k0 = model.kernel
    gamma = float(k0.partial_power_moment(e_a + 1.0, 0.0, c0)) + c0 ** ((a - b) / (1 - alpha)) * float(
        k0.partial_power_moment(e_b + 1.0, c0, INF)
    )
    ct = c0 ** ((a - b) / (1 - alpha))
    scale = model.x0 / gamma

    def payoff(rho):
        rho = np.asarray(rho, dtype=float)
        out = scale * np.where(rho <= c0, rho**e_a, ct * rho**e_b)
        return float(out) if out.ndim == 0 else out

    return payoff
