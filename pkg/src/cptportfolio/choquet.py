"""Distorted expectations (Choquet integrals) and arrangement operators."""

from __future__ import annotations

import bisect
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate
from scipy.special import ndtr, ndtri

from ._numerics import expect_normal
from .errors import DomainError, EvaluationError, IntegrabilityError
from .kernel import PricingKernel


@dataclass(frozen=True, eq=False)
class DiscreteClaim:
    """Simple nonnegative random variable: outcome values with their probabilities."""

    values: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        v = np.atleast_1d(np.asarray(self.values, dtype=float))
        p = np.atleast_1d(np.asarray(self.probs, dtype=float))
        if v.shape != p.shape or v.ndim != 1:
            raise DomainError("values and probs must be matching 1-D arrays")
        if np.any(p <= 0) or abs(p.sum() - 1.0) > 1e-12:
            raise DomainError("probabilities must be positive and sum to 1")
        if not np.all(np.isfinite(v)):
            raise DomainError("values must be finite")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "probs", p)

    @classmethod
    def from_pairs(cls, pairs):
        v, p = zip(*pairs)
        return cls(np.array(v), np.array(p))


def choquet_value_discrete(x: DiscreteClaim, u: Callable, t) -> float:
    """Sum over distinct utility levels of (level step) * T(P(u(X) >= level))."""
    if np.any(x.values < 0):
        raise DomainError("outcomes must be nonnegative; split gains and losses first")
    levels = np.asarray(u(x.values), dtype=float)
    uniq, inv = np.unique(levels, return_inverse=True)
    # correctly rounded group masses keep the result independent of input order
    mass = [math.fsum(x.probs[inv == i]) for i in range(uniq.size)]
    tail = np.array([math.fsum(mass[i:]) for i in range(uniq.size)])
    tail[0] = 1.0
    tail = np.minimum(tail, 1.0)
    steps = np.diff(np.concatenate(([0.0], uniq)))
    if uniq[0] == 0.0:
        steps, tail = steps[1:], tail[1:]
    return float(np.sum(steps * np.asarray(t.value(tail), dtype=float)))


@dataclass(frozen=True, eq=False)
class QuantileFn:
    """Nondecreasing, left-continuous quantile function g on (0, 1).

    fn evaluates g(z); upper, if given, evaluates g(1 - w) from w and is used
    near z = 1. jumps lists interior discontinuities.
    """

    fn: Callable
    upper: Optional[Callable] = None
    jumps: tuple = ()

    def __call__(self, z):
        return self.fn(z)

    def at_upper(self, w):
        if self.upper is not None:
            return self.upper(w)
        return self.fn(1.0 - np.asarray(w, dtype=float))

    @classmethod
    def step(cls, knots, values):
        """g(z) = values[i] on (knots[i], knots[i+1]], knots[0] = 0 and an implicit last knot 1."""
        knots = np.asarray(knots, dtype=float)
        values = np.asarray(values, dtype=float)
        if knots[0] != 0 or np.any(np.diff(knots) <= 0) or knots[-1] >= 1 or knots.shape != values.shape:
            raise DomainError("knots must start at 0 and increase strictly below 1")
        if np.any(np.diff(values) < 0):
            raise DomainError("quantile values must be nondecreasing")

        knot_list, value_list = knots.tolist(), values.tolist()
        last = len(value_list) - 1

        def fn(z):
            if isinstance(z, float):
                # scalar path for quadrature callbacks
                return value_list[min(max(bisect.bisect_left(knot_list, z) - 1, 0), last)]
            idx = np.searchsorted(knots, np.asarray(z, dtype=float), side="left") - 1
            return values[np.clip(idx, 0, last)]

        return cls(fn=fn, jumps=tuple(float(k) for k in knots[1:]))

    @classmethod
    def linear(cls, knots, values):
        knots = np.asarray(knots, dtype=float)
        values = np.asarray(values, dtype=float)
        if np.any(np.diff(values) < 0):
            raise DomainError("quantile values must be nondecreasing")
        return cls(fn=lambda z: np.interp(z, knots, values))

    @classmethod
    def from_discrete(cls, x: DiscreteClaim):
        order = np.argsort(x.values, kind="stable")
        v, p = x.values[order], x.probs[order]
        uniq, inv = np.unique(v, return_inverse=True)
        mass = np.bincount(inv, weights=p)
        knots = np.concatenate(([0.0], np.cumsum(mass)[:-1]))
        return cls.step(knots, uniq)

    def normal_score(self, s, reverse=False):
        """g(Phi(s)), or g(1 - Phi(s)) when reverse, keeping tail accuracy."""
        s = np.asarray(s, dtype=float)
        if reverse:
            s = -s
        if s.ndim == 0:
            return self.fn(ndtr(s)) if s <= 0 else self.at_upper(ndtr(-s))
        return np.where(s <= 0, self.fn(ndtr(np.minimum(s, 0))), self.at_upper(ndtr(-np.maximum(s, 0))))


def _quad_checked(f, a, b, atol, rtol):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(f, a, b, epsabs=atol, epsrel=rtol, limit=400)
    if not math.isfinite(val):
        raise IntegrabilityError(f"integrand not integrable on [{a:g}, {b:g}]")
    return val, err


def choquet_value_quantile(g: QuantileFn, u: Callable, t, atol: float = 1e-9, rtol: float = 1e-10) -> float:
    """int_0^1 u(g(z)) T'(1 - z) dz.

    Pieces touching z = 0 or z = 1 are integrated in s with z = s^2 (resp.
    1 - z = s^2), which absorbs inverse-square-root type blow-ups of T'.
    """
    cuts = sorted({0.0, 0.5, 1.0, *(j for j in g.jumps if 0 < j < 1)})
    total, err_total = 0.0, 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        if a == 0.0:
            def f(s):
                z = s * s
                with np.errstate(all="ignore"):
                    return float(u(g(z)) * t.derivative_upper(z) * 2 * s) if s > 0 else 0.0

            val, err = _quad_checked(f, 0.0, math.sqrt(b), atol, rtol)
        elif b == 1.0:
            def f(s):
                w = s * s
                with np.errstate(all="ignore"):
                    return float(u(g.at_upper(w)) * t.derivative(w) * 2 * s) if s > 0 else 0.0

            val, err = _quad_checked(f, 0.0, math.sqrt(1.0 - a), atol, rtol)
        else:
            def f(z):
                with np.errstate(all="ignore"):
                    return float(u(g(z)) * t.derivative_upper(z))

            val, err = _quad_checked(f, a, b, atol, rtol)
        total += val
        err_total += err
    if err_total > max(10 * atol, 1e-8 * abs(total)):
        raise EvaluationError(f"quadrature error estimate {err_total:.3e}", estimate=err_total)
    return total


@dataclass(frozen=True, eq=False)
class ArrangedClaim:
    """Claim X = payoff(rho) together with its price E[X rho]."""

    payoff: Callable
    price: float


def _arranged(g: QuantileFn, k: PricingKernel, reverse: bool) -> ArrangedClaim:
    if reverse:
        def payoff(rho):
            return g.normal_score(k.state(rho), reverse=True)
    else:
        def payoff(rho):
            return g.normal_score(k.state(rho))

    points = tuple(float(v) for v in ndtri(np.array(g.jumps))) if g.jumps else ()
    if reverse:
        points = tuple(-p for p in points)
    try:
        price = expect_normal(
            lambda s: g.normal_score(s, reverse=reverse) * math.exp(k.mu + k.sd * s), points=points
        )
    except IntegrabilityError as exc:
        raise IntegrabilityError(f"E[X rho] is infinite for this arrangement: {exc}") from None
    return ArrangedClaim(payoff=payoff, price=price)


def comonotone_max(g_target: QuantileFn, k: PricingKernel) -> ArrangedClaim:
    """X = g(F(rho)): the arrangement of distribution g with the largest E[X rho]."""
    return _arranged(g_target, k, reverse=False)


def anticomonotone_min(g_target: QuantileFn, k: PricingKernel) -> ArrangedClaim:
    """X = g(1 - F(rho)): the arrangement with the smallest E[X rho]."""
    return _arranged(g_target, k, reverse=True)


def arrange_on_states(values, rho, comonotone=True):
    """Assign sorted values to states so they move with (or against) rho."""
    values = np.sort(np.asarray(values, dtype=float))
    rank = np.argsort(np.argsort(np.asarray(rho, dtype=float), kind="stable"), kind="stable")
    return values[rank] if comonotone else values[::-1][rank]


# --------------------------------------------------- rearrangement inequality


@dataclass(frozen=True)
class StepFunction:
    """f(t) = sum_k h_k 1{t >= t_k} with t_k > 0, h_k > 0, so f(0) = 0.

    Works with Fraction inputs for exact arithmetic.
    """

    times: tuple
    heights: tuple
    _levels: tuple = field(init=False, repr=False)

    def __post_init__(self):
        if len(self.times) != len(self.heights):
            raise DomainError("times and heights must have equal length")
        if any(t <= 0 for t in self.times) or any(h <= 0 for h in self.heights):
            raise DomainError("jump times and heights must be positive")
        pairs = sorted(zip(self.times, self.heights))
        merged = []
        for t, h in pairs:
            if merged and merged[-1][0] == t:
                merged[-1] = (t, merged[-1][1] + h)
            else:
                merged.append((t, h))
        object.__setattr__(self, "times", tuple(t for t, _ in merged))
        object.__setattr__(self, "heights", tuple(h for _, h in merged))
        lev, acc = [], 0
        for h in self.heights:
            acc = acc + h
            lev.append(acc)
        object.__setattr__(self, "_levels", tuple(lev))

    def left(self, y):
        return sum((h for t, h in zip(self.times, self.heights) if t < y), 0)

    def right(self, y):
        return sum((h for t, h in zip(self.times, self.heights) if t <= y), 0)

    __call__ = right

    def integral(self, y):
        return sum((h * (y - t) for t, h in zip(self.times, self.heights) if t < y), 0)

    def inverse(self, x):
        """inf{y >= 0 : f(y) >= x}; +inf beyond the top level."""
        if x <= 0:
            return 0
        for t, lev in zip(self.times, self._levels):
            if lev >= x:
                return t
        return math.inf

    def inverse_integral(self, x):
        if x <= 0:
            return 0
        if self._levels and x > self._levels[-1]:
            return math.inf
        total, prev = 0, 0
        for t, lev in zip(self.times, self._levels):
            top = lev if lev < x else x
            total = total + t * (top - prev)
            if lev >= x:
                break
            prev = lev
        return total


def rearrangement_gap(f: StepFunction, x, y):
    """int_0^x f^{-1} + int_0^y f - x y, which is never negative."""
    lhs = f.inverse_integral(x)
    if lhs == math.inf:
        return math.inf
    return lhs + f.integral(y) - x * y


def rearrangement_equality_expected(f: StepFunction, x, y) -> bool:
    return f.left(y) <= x <= f.right(y)
