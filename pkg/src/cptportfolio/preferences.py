"""S-shaped utilities, probability distortions and checks of their standing assumptions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq
from scipy.special import ndtr, ndtri

from .errors import DomainError, EvaluationError
from .kernel import INF, PricingKernel

# ---------------------------------------------------------------- utilities


class SShapedUtility:
    """Gain utility u_plus and loss utility u_minus, both defined on [0, inf)."""

    is_crra = False

    def u_plus(self, x):
        raise NotImplementedError

    def u_minus(self, x):
        raise NotImplementedError

    def du_plus(self, x):
        raise NotImplementedError

    def inv_du_plus(self, y):
        raise NotImplementedError

    def d2u_plus(self, x):
        # central difference fallback
        x = np.asarray(x, dtype=float)
        h = 1e-4 * x
        return (self.du_plus(x + h) - self.du_plus(x - h)) / (2 * h)

    def relative_risk_aversion(self, x):
        x = np.asarray(x, dtype=float)
        return -x * self.d2u_plus(x) / self.du_plus(x)


@dataclass(frozen=True)
class TwoPieceCRRA(SShapedUtility):
    """u_plus(x) = x**alpha, u_minus(x) = k_minus * x**alpha."""

    alpha: float
    k_minus: float
    is_crra = True

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise DomainError("alpha must lie in (0, 1)")
        if not self.k_minus > 0:
            raise DomainError("k_minus must be positive")

    def u_plus(self, x):
        return np.power(x, self.alpha)

    def u_minus(self, x):
        return self.k_minus * np.power(x, self.alpha)

    def du_plus(self, x):
        with np.errstate(divide="ignore"):
            return self.alpha * np.power(x, self.alpha - 1.0)

    def d2u_plus(self, x):
        with np.errstate(divide="ignore"):
            return self.alpha * (self.alpha - 1.0) * np.power(x, self.alpha - 2.0)

    def inv_du_plus(self, y):
        return np.power(np.asarray(y, dtype=float) / self.alpha, 1.0 / (self.alpha - 1.0))

    def relative_risk_aversion(self, x):
        return np.full_like(np.asarray(x, dtype=float), 1.0 - self.alpha)


@dataclass(frozen=True)
class GenericUtility(SShapedUtility):
    """Utility given by function handles.

    inv_du_plus and d2u_plus are optional; missing ones are obtained by root
    finding and central differences. Set loss_strictly_concave=False for a
    loss utility that is linear near zero.
    """

    u_plus_fn: Callable
    u_minus_fn: Callable
    du_plus_fn: Callable
    inv_du_plus_fn: Optional[Callable] = None
    d2u_plus_fn: Optional[Callable] = None
    loss_strictly_concave: bool = True
    name: str = "generic"

    def u_plus(self, x):
        return self.u_plus_fn(x)

    def u_minus(self, x):
        return self.u_minus_fn(x)

    def du_plus(self, x):
        return self.du_plus_fn(x)

    def d2u_plus(self, x):
        if self.d2u_plus_fn is not None:
            return self.d2u_plus_fn(x)
        return super().d2u_plus(x)

    def inv_du_plus(self, y):
        if self.inv_du_plus_fn is not None:
            return self.inv_du_plus_fn(y)
        y = np.asarray(y, dtype=float)
        if y.size == 1:
            out = np.array(self._invert_scalar(float(y))).reshape(y.shape)
            return float(out) if out.ndim == 0 else out
        return self._invert_array(y)

    def _invert_array(self, y):
        # bisection on ln x; u' is decreasing, so the bracket shrinks monotonically
        lo = np.full(y.shape, -690.0)
        hi = np.full(y.shape, 690.0)
        with np.errstate(all="ignore"):
            for _ in range(64):
                mid = 0.5 * (lo + hi)
                above = np.asarray(self.du_plus(np.exp(mid)), dtype=float) > y
                lo = np.where(above, mid, lo)
                hi = np.where(above, hi, mid)
            out = np.exp(0.5 * (lo + hi))
            out = np.where(np.asarray(self.du_plus(np.exp(-690.0))) < y, 0.0, out)
            out = np.where(np.asarray(self.du_plus(np.exp(690.0))) > y, math.inf, out)
        return out

    def _invert_scalar(self, y):
        lo, hi = 1e-300, 1.0
        while self.du_plus(hi) > y:
            hi *= 2.0
            if hi > 1e300:
                return math.inf
        if self.du_plus(lo) < y:
            return 0.0
        return brentq(lambda x: self.du_plus(x) - y, lo, hi, xtol=1e-300, rtol=1e-14, maxiter=500)


# -------------------------------------------------------------- distortions


class Distortion:
    """Probability weighting T: [0, 1] -> [0, 1].

    derivative_upper(w) returns T'(1 - w) computed from w directly, which
    keeps the upper end accurate where 1 - w rounds to 1.
    """

    name = "distortion"

    def value(self, z):
        raise NotImplementedError

    def derivative(self, z):
        raise NotImplementedError

    def derivative_upper(self, w):
        return self.derivative(1.0 - np.asarray(w, dtype=float))

    def j_closed(self, kernel: PricingKernel, x):
        """Closed-form j(x) when known for this kernel, else None."""
        return None


@dataclass(frozen=True)
class Identity(Distortion):
    name = "identity"

    def value(self, z):
        return np.clip(np.asarray(z, dtype=float), 0.0, 1.0)

    def derivative(self, z):
        return np.ones_like(np.asarray(z, dtype=float))

    def derivative_upper(self, w):
        return np.ones_like(np.asarray(w, dtype=float))

    def j_closed(self, kernel, x):
        return np.zeros_like(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class TverskyKahneman(Distortion):
    """T(p) = p^g / (p^g + (1-p)^g)^(1/g); increasing for g above about 0.28."""

    gamma: float
    name = "tversky-kahneman"

    def __post_init__(self):
        if not 0.28 < self.gamma <= 1.0:
            raise DomainError("gamma must lie in (0.28, 1] for a monotone weighting")

    def _pieces(self, p, q):
        g = self.gamma
        with np.errstate(divide="ignore", invalid="ignore"):
            d = p**g + q**g
            t = p**g / d ** (1.0 / g)
            slope = t * (g / p - (p ** (g - 1.0) - q ** (g - 1.0)) / d)
        return t, slope

    def value(self, z):
        z = np.clip(np.asarray(z, dtype=float), 0.0, 1.0)
        t, _ = self._pieces(z, 1.0 - z)
        return np.where(z >= 1.0, 1.0, np.where(z <= 0.0, 0.0, t))

    def derivative(self, z):
        z = np.asarray(z, dtype=float)
        return self._pieces(z, 1.0 - z)[1]

    def derivative_upper(self, w):
        w = np.asarray(w, dtype=float)
        return self._pieces(1.0 - w, w)[1]


@dataclass(frozen=True)
class PowerHead(Distortion):
    """T(t) = t**exponent on [0, knot], continued linearly to T(1) = 1."""

    exponent: float = 0.25
    knot: float = 0.5
    name = "power-head"

    def __post_init__(self):
        if not 0 < self.exponent <= 1:
            raise DomainError("exponent must lie in (0, 1]")
        if not 0 < self.knot < 1:
            raise DomainError("knot must lie in (0, 1)")

    @property
    def tail_slope(self):
        return (1.0 - self.knot**self.exponent) / (1.0 - self.knot)

    def value(self, z):
        z = np.clip(np.asarray(z, dtype=float), 0.0, 1.0)
        head = np.power(np.minimum(z, self.knot), self.exponent)
        return np.where(z <= self.knot, head, self.knot**self.exponent + self.tail_slope * (z - self.knot))

    def derivative(self, z):
        z = np.asarray(z, dtype=float)
        with np.errstate(divide="ignore"):
            head = self.exponent * np.power(z, self.exponent - 1.0)
        return np.where(z <= self.knot, head, self.tail_slope)


@dataclass(frozen=True, eq=False)
class Tabulated(Distortion):
    """Monotone piecewise-cubic interpolation through (p, T(p)) pairs."""

    p: np.ndarray
    t: np.ndarray
    min_slope: float = 1e-12
    name = "tabulated"
    _interp: PchipInterpolator = field(init=False, repr=False)

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        t = np.asarray(self.t, dtype=float)
        if p.ndim != 1 or p.shape != t.shape or p.size < 2:
            raise DomainError("table needs matching 1-D p and t arrays")
        if p[0] != 0.0 or p[-1] != 1.0 or np.any(np.diff(p) <= 0):
            raise DomainError("p must increase strictly from 0 to 1")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "_interp", PchipInterpolator(p, t))

    def first_violation(self):
        bad = np.nonzero(np.diff(self.t) <= 0)[0]
        return int(bad[0]) if bad.size else None

    def value(self, z):
        return self._interp(np.clip(np.asarray(z, dtype=float), 0.0, 1.0))

    def derivative(self, z):
        return np.maximum(self._interp.derivative()(np.asarray(z, dtype=float)), self.min_slope)


@dataclass(frozen=True)
class ConstructedReversedS(Distortion):
    """Distortion with T'(F(x)) = kappa x^a on (0, c0] and kappa c0^(a-b) x^b beyond.

    The family is tied to the kernel F it was built on; j(x) equals a below
    c0 and b above.
    """

    kernel: PricingKernel
    c0: float
    a: float
    b: float
    kappa: float
    name = "reversed-s"

    @property
    def kappa_upper(self):
        return self.kappa * self.c0 ** (self.a - self.b)

    def _h(self, x):
        k = self.kernel
        x = np.asarray(x, dtype=float)
        lower = k.partial_power_moment(self.a, 0.0, np.minimum(x, self.c0))
        upper = k.partial_power_moment(self.b, self.c0, np.maximum(x, self.c0))
        return self.kappa * lower + self.kappa_upper * upper

    def _slope(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x <= self.c0, self.kappa * np.power(x, self.a), self.kappa_upper * np.power(x, self.b))

    def value(self, z):
        z = np.asarray(z, dtype=float)
        inner = np.clip(z, 1e-300, 1 - 1e-16)
        out = self._h(self.kernel.quantile(inner))
        out = np.where(z <= 0.0, 0.0, np.where(z >= 1.0, 1.0, out))
        return float(out) if out.ndim == 0 else out

    def derivative(self, z):
        z = np.asarray(z, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            x = np.exp(self.kernel.mu + self.kernel.sd * ndtri(z))
        return self._slope(x)

    def derivative_upper(self, w):
        w = np.asarray(w, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            x = np.exp(self.kernel.mu - self.kernel.sd * ndtri(w))
        return self._slope(x)

    def j_closed(self, kernel, x):
        if kernel != self.kernel:
            return None
        return np.where(np.asarray(x, dtype=float) <= self.c0, float(self.a), float(self.b))


def reversed_s_from_params(k: PricingKernel, c0: float, a: float, b: float) -> ConstructedReversedS:
    """Normalized member of the family without sign restrictions on a, b."""
    if not c0 > 0:
        raise DomainError("c0 must be positive")
    total = k.partial_power_moment(a, 0.0, c0) + c0 ** (a - b) * k.partial_power_moment(b, c0, INF)
    kappa = 1.0 / total
    if not (kappa > 0 and math.isfinite(kappa)):
        raise DomainError("normalizing constant is not finite for these exponents")
    return ConstructedReversedS(kernel=k, c0=float(c0), a=float(a), b=float(b), kappa=kappa)


def build_reversed_s(k: PricingKernel, c0: float, a: float, b: float) -> ConstructedReversedS:
    """Reversed-S distortion with j = a < 0 below c0 and j = b in (0, 1) above."""
    if not (a < 0 < b < 1):
        raise DomainError("need a < 0 < b < 1")
    return reversed_s_from_params(k, c0, a, b)


def tprime_at_state(t: Distortion, s):
    """T'(Phi(s)), switching to the upper-tail form for s > 0."""
    s = np.asarray(s, dtype=float)
    lo = t.derivative(ndtr(np.minimum(s, 0.0)))
    hi = t.derivative_upper(ndtr(-np.maximum(s, 0.0)))
    out = np.where(s <= 0, lo, hi)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------- reports


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""
    witness: object = None


@dataclass
class ValidationReport:
    subject: str
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def failures(self):
        return [c for c in self.checks if not c.passed]


def _strictly_increasing(v):
    d = np.diff(v)
    bad = np.nonzero(~(d > 0))[0]
    return (bad.size == 0), (int(bad[0]) if bad.size else None)


def validate_utility(u: SShapedUtility, grid) -> ValidationReport:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 16 or np.any(np.diff(grid) <= 0) or grid[0] <= 0:
        raise DomainError("grid must be positive, strictly increasing, with at least 16 points")
    rep = ValidationReport("utility")
    up = np.asarray(u.u_plus(grid), dtype=float)
    um = np.asarray(u.u_minus(grid), dtype=float)

    zero = abs(float(u.u_plus(0.0))) + abs(float(u.u_minus(0.0)))
    rep.checks.append(Check("zero-at-origin", zero == 0.0, f"|u+(0)|+|u-(0)| = {zero:g}"))

    ok_p, i_p = _strictly_increasing(up)
    ok_m, i_m = _strictly_increasing(um)
    rep.checks.append(
        Check("increasing", ok_p and ok_m, "u+ and u- strictly increasing on grid",
              witness=None if ok_p and ok_m else ("u+" if not ok_p else "u-", i_p if not ok_p else i_m))
    )

    def slopes(v):
        return np.diff(v) / np.diff(grid)

    sp, sm = slopes(up), slopes(um)
    strict = np.nonzero(~(np.diff(sp) < -1e-12 * np.abs(sp[:-1])))[0]
    rep.checks.append(
        Check("strictly-concave-gain", strict.size == 0, "slopes of u+ strictly decreasing",
              witness=int(strict[0]) if strict.size else None)
    )
    weak = np.nonzero(np.diff(sm) > 1e-12 * np.abs(sm[:-1]))[0]
    rep.checks.append(
        Check("concave-loss", weak.size == 0, "slopes of u- nonincreasing",
              witness=int(weak[0]) if weak.size else None)
    )

    # log-log slopes of u+': a power-law blow-up at 0 keeps a steady slope,
    # while a finite u+'(0) shows a slope that fades as x decreases
    idx = [0, 1, 2, -2, -1]
    lg = np.log(grid[idx])
    ld = np.log(np.asarray(u.du_plus(grid[idx]), dtype=float))
    low_slope = (ld[1] - ld[0]) / (lg[1] - lg[0])
    next_slope = (ld[2] - ld[1]) / (lg[2] - lg[1])
    high_slope = (ld[4] - ld[3]) / (lg[4] - lg[3])
    steady = abs(low_slope) >= 0.9 * abs(next_slope)
    inada = bool(low_slope < -1e-3 and steady and high_slope < -1e-3)
    rep.checks.append(
        Check("inada", inada,
              f"log-log slope of u+' at lower end {low_slope:.4g}, upper end {high_slope:.4g}")
    )

    top = grid[-3:]
    ru = np.asarray(u.relative_risk_aversion(top), dtype=float)
    rep.checks.append(
        Check("risk-aversion-tail", bool(np.all(np.isfinite(ru)) and ru.min() > 1e-3),
              f"R_u at largest grid points: {', '.join(f'{v:.6g}' for v in ru)}", witness=ru)
    )
    return rep


def validate_distortion(t: Distortion, grid) -> ValidationReport:
    grid = np.asarray(grid, dtype=float)
    if np.any((grid <= 0) | (grid >= 1)):
        raise DomainError("grid must lie inside (0, 1)")
    grid = np.sort(grid)
    rep = ValidationReport(f"distortion {t.name}")
    t0, t1 = float(t.value(0.0)), float(t.value(1.0))
    rep.checks.append(Check("endpoints", t0 == 0.0 and abs(t1 - 1.0) <= 1e-14, f"T(0)={t0:.3g}, T(1)={t1:.17g}"))
    if isinstance(t, Tabulated):
        bad = t.first_violation()
        rep.checks.append(Check("table-monotone", bad is None, "tabulated values strictly increase", witness=bad))
    vals = np.asarray(t.value(grid), dtype=float)
    ok, i = _strictly_increasing(vals)
    rep.checks.append(Check("increasing", ok, "T strictly increasing on grid", witness=i))
    der = np.asarray(t.derivative(grid), dtype=float)
    good = np.isfinite(der) & (der > 0)
    bad = np.nonzero(~good)[0]
    rep.checks.append(
        Check("derivative", bool(good.all()), "T' finite and positive on grid",
              witness=int(bad[0]) if bad.size else None)
    )
    return rep


@dataclass
class MonotonicityResult:
    ok: bool
    first_violation: Optional[tuple] = None

    def __bool__(self):
        return self.ok


def monotonicity_check(k: PricingKernel, tplus: Distortion, n: int = 400, s_range=8.0) -> MonotonicityResult:
    """Is z -> F^{-1}(z)/T'(z) nondecreasing? Grid is uniform in the normal score, so clustered at 0 and 1."""
    if n < 100:
        raise DomainError("n must be at least 100")
    s = np.linspace(-s_range, s_range, n)
    ratio = k.from_state(s) / tprime_at_state(tplus, s)
    drop = ratio[1:] < ratio[:-1] * (1 - 1e-10)
    bad = np.nonzero(drop | ~np.isfinite(ratio[1:]))[0]
    if bad.size == 0:
        return MonotonicityResult(True)
    i = int(bad[0])
    z = ndtr(s[[i, i + 1]])
    return MonotonicityResult(False, (i, float(z[0]), float(z[1]), float(ratio[i]), float(ratio[i + 1])))


def j_function(k: PricingKernel, tplus: Distortion, x, closed_form=True):
    """x * d/dx ln T'(F(x)); closed form when the distortion knows it, else central differences."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise DomainError("j requires x > 0")
    if closed_form:
        jc = tplus.j_closed(k, x)
        if jc is not None:
            return float(jc) if np.ndim(jc) == 0 else jc
    h = 1e-4 * x
    with np.errstate(all="ignore"):
        up = np.log(tprime_at_state(tplus, k.state(x + h)))
        dn = np.log(tprime_at_state(tplus, k.state(x - h)))
        out = x * (up - dn) / (2 * h)
    if not np.all(np.isfinite(out)):
        raise EvaluationError(f"T' blows up near x = {x}")
    return float(out) if np.ndim(out) == 0 else out
