"""Lognormal state-price density: market inputs, law of rho(T), truncated moments."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import DomainError, ModelError

INF = math.inf


@dataclass(frozen=True, eq=False)
class MarketParams:
    """Constant-coefficient complete market.

    r is the risk-free rate, B the excess-return vector, sigma the (square)
    volatility matrix and T the horizon in years.
    """

    r: float
    B: np.ndarray
    sigma: np.ndarray
    T: float
    theta: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        B = np.atleast_1d(np.asarray(self.B, dtype=float))
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        if sigma.shape != (B.size, B.size):
            raise ModelError(f"sigma must be {B.size}x{B.size}, got {sigma.shape}")
        if not (np.all(np.isfinite(B)) and np.all(np.isfinite(sigma))):
            raise ModelError("market parameters must be finite")
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ModelError("horizon T must be positive")
        try:
            if np.linalg.cond(sigma) > 1e12:
                raise np.linalg.LinAlgError
            theta = np.linalg.solve(sigma, B)
        except np.linalg.LinAlgError:
            raise ModelError("volatility matrix is singular") from None
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "theta", theta)

    @property
    def theta_norm(self) -> float:
        return float(np.linalg.norm(self.theta))

    def risk_direction(self) -> np.ndarray:
        """(sigma sigma')^{-1} B, the vector every optimal allocation is proportional to."""
        return np.linalg.solve(self.sigma @ self.sigma.T, self.B)


@dataclass(frozen=True)
class PricingKernel:
    """ln rho ~ N(mu, sd^2)."""

    mu: float
    sd: float

    def __post_init__(self):
        if not (math.isfinite(self.mu) and math.isfinite(self.sd)):
            raise ModelError("kernel parameters must be finite")
        if not self.sd > 0:
            raise ModelError("degenerate kernel: sd must be positive")

    # standardized state s = (ln x - mu)/sd
    def state(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            return (np.log(x) - self.mu) / self.sd

    def from_state(self, s):
        return np.exp(self.mu + self.sd * np.asarray(s, dtype=float))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(~(x > 0)):
            raise DomainError("cdf requires x > 0")
        out = ndtr(self.state(x))
        return float(out) if out.ndim == 0 else out

    def sf(self, x):
        """P(rho > x), accurate in the upper tail."""
        x = np.asarray(x, dtype=float)
        if np.any(x < 0):
            raise DomainError("sf requires x >= 0")
        out = ndtr(-self.state(x))
        return float(out) if out.ndim == 0 else out

    def quantile(self, p):
        p = np.asarray(p, dtype=float)
        if np.any(~((p > 0) & (p < 1))):
            raise DomainError("quantile requires 0 < p < 1")
        out = np.exp(self.mu + self.sd * ndtri(p))
        return float(out) if out.ndim == 0 else out

    def upper_quantile(self, w):
        """x with P(rho > x) = w; avoids forming 1 - w."""
        w = np.asarray(w, dtype=float)
        if np.any(~((w > 0) & (w < 1))):
            raise DomainError("upper_quantile requires 0 < w < 1")
        out = np.exp(self.mu - self.sd * ndtri(w))
        return float(out) if out.ndim == 0 else out

    def mean(self) -> float:
        return math.exp(self.mu + 0.5 * self.sd**2)

    def partial_power_moment(self, beta, a=0.0, b=INF):
        """E[rho^beta 1{a < rho <= b}] in closed form (a, b may be arrays; b may be inf)."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if np.any(a < 0) or np.any(np.isnan(a)) or np.any(np.isnan(b)):
            raise DomainError("partial_power_moment requires 0 <= a")
        if np.any(a > b):
            raise DomainError("partial_power_moment requires a <= b")
        shift = self.mu + beta * self.sd**2
        with np.errstate(divide="ignore"):
            da = (np.log(a) - shift) / self.sd
            db = (np.log(b) - shift) / self.sd
        # subtract upper-tail probabilities when both limits sit above the centre
        upper = da > 0
        mass = np.where(upper, ndtr(-da) - ndtr(-db), ndtr(db) - ndtr(da))
        mass = np.maximum(mass, 0.0)
        scale = math.exp(beta * self.mu + 0.5 * (beta * self.sd) ** 2)
        out = scale * mass
        return float(out) if out.ndim == 0 else out


def kernel_from_market(m: MarketParams, t: float = 0.0) -> PricingKernel:
    """Law of rho(t, T) = rho(T)/rho(t) for a constant-coefficient market."""
    if not 0 <= t < m.T:
        raise DomainError("need 0 <= t < T")
    tau = m.T - t
    th = m.theta_norm
    if th <= 0:
        raise ModelError("degenerate kernel: market price of risk is zero")
    return PricingKernel(mu=-(m.r + 0.5 * th * th) * tau, sd=th * math.sqrt(tau))
