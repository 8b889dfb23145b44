"""Quadrature against the standard normal density and 1-D search helpers."""

import math
import os
import warnings

import numpy as np
from scipy import integrate

from .errors import EvaluationError, IntegrabilityError

SQRT2PI = math.sqrt(2.0 * math.pi)

# Standardized log-kernel values beyond +-S_MAX carry probability below 1e-299.
S_MAX = 37.0
TAIL_START = 20.0
TAIL_GAP = 10.0
_BREAKS = (-37.0, -20.0, -10.0, -5.0, -2.0, 0.0, 2.0, 5.0, 10.0, 20.0, 37.0)


def normal_pdf(s):
    return np.exp(-0.5 * np.square(s)) / SQRT2PI


def _quad(f, a, b, rtol, atol):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(f, a, b, epsabs=atol, epsrel=rtol, limit=400)
    return val, err


def expect_normal(f, lo=-math.inf, hi=math.inf, rtol=1e-11, atol=0.0, points=(), log=False):
    """Integrate f(s) * pdf(s) over [lo, hi] for the standard normal pdf.

    With log=True, f returns the log of a positive integrand, which is
    combined with the density before exponentiating. Raises
    IntegrabilityError when an open tail carries non-negligible mass (the
    expectation is numerically infinite) and EvaluationError when the
    quadrature error estimate is poor.
    """
    lo_eff = max(lo, -S_MAX)
    hi_eff = min(hi, S_MAX)
    if hi_eff <= lo_eff:
        return 0.0

    if log:
        def g(s):
            with np.errstate(all="ignore"):
                return float(np.exp(f(s) - 0.5 * s * s) / SQRT2PI)
    else:
        def g(s):
            with np.errstate(all="ignore"):
                return float(f(s) * normal_pdf(s))

    # far tails sit beyond +-TAIL_START and at least TAIL_GAP units past the opposite limit,
    # so an integral living entirely in one tail is not mistaken for a divergent one
    left_edge = min(-TAIL_START, hi_eff - TAIL_GAP)
    right_edge = max(TAIL_START, lo_eff + TAIL_GAP)
    extra = (left_edge, right_edge)
    cuts = sorted({lo_eff, hi_eff, *(p for p in (*_BREAKS, *extra, *points) if lo_eff < p < hi_eff)})
    total = 0.0
    err_total = 0.0
    left_tail = right_tail = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        val, err = _quad(g, a, b, rtol, atol)
        if not math.isfinite(val):
            raise IntegrabilityError(f"integrand not finite on [{a:g}, {b:g}]")
        total += val
        err_total += err
        if lo == -math.inf and b <= left_edge:
            left_tail += abs(val)
        if hi == math.inf and a >= right_edge:
            right_tail += abs(val)
    scale = abs(total)
    if left_tail > 1e-8 * scale or right_tail > 1e-8 * scale:
        raise IntegrabilityError(
            "expectation diverges: far-tail contribution "
            f"{max(left_tail, right_tail):.3e} vs total {total:.3e}"
        )
    if err_total > max(1e-6 * scale, 10 * atol, 1e-300):
        raise EvaluationError(
            f"quadrature error estimate {err_total:.3e} for value {total:.3e}",
            estimate=err_total,
        )
    return total


def golden_min(f, a, b, tol=1e-10, maxiter=200):
    """Minimize a unimodal f on [a, b]; returns (x, f(x))."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(maxiter):
        if abs(b - a) <= tol * (1.0 + abs(a) + abs(b)):
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def num_threads():
    """Worker cap from CPT_NUM_THREADS (default 1)."""
    raw = os.environ.get("CPT_NUM_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        return 1
    return max(1, n)


def parallel_map(fn, items):
    """Map in input order, using a thread pool when CPT_NUM_THREADS > 1."""
    items = list(items)
    n = num_threads()
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
