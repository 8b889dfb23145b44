import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from cptportfolio.errors import DomainError, ModelError
from cptportfolio.kernel import INF, MarketParams, PricingKernel, kernel_from_market

# Frozen with mpmath at 40 digits (ncdf, findroot, and quadrature of the density).
PHI_035 = 0.6368306511756190712
Z_975 = 1.959963984540054235
PPM_NEG1_0_1 = 0.7755948419697380660

BASE = PricingKernel(mu=-0.07, sd=0.2)


def mc_log_rho(k, n=10**7, seed=7):
    rng = np.random.default_rng(seed)
    return k.mu + k.sd * rng.standard_normal(n)


class TestKernelFromMarket:
    def test_single_asset(self):
        k = kernel_from_market(MarketParams(0.05, [0.04], [[0.2]], 1.0))
        assert k.mu == pytest.approx(-0.07, rel=1e-14)
        assert k.sd == pytest.approx(0.2, rel=1e-14)

    def test_second_example(self):
        k = kernel_from_market(MarketParams(0.0, [0.08], [[0.4]], 4.0))
        assert k.mu == pytest.approx(-0.08, rel=1e-14)
        assert k.sd == pytest.approx(0.4, rel=1e-14)

    def test_zero_risk_premium_rejected(self):
        with pytest.raises(ModelError, match="degenerate kernel"):
            kernel_from_market(MarketParams(0.05, [0.0], [[0.2]], 1.0))

    def test_singular_sigma_rejected(self):
        with pytest.raises(ModelError):
            MarketParams(0.05, [0.04, 0.05], [[0.2, 0.1], [0.4, 0.2]], 1.0)

    def test_zero_sd_rejected(self):
        with pytest.raises(ModelError):
            PricingKernel(0.0, 0.0)

    @given(
        r=st.floats(-0.05, 0.2),
        b=st.floats(0.01, 0.3),
        s=st.floats(0.05, 0.8),
        T=st.floats(0.1, 20.0),
    )
    def test_mean_is_discount_factor(self, r, b, s, T):
        k = kernel_from_market(MarketParams(r, [b], [[s]], T))
        assert k.mean() == pytest.approx(math.exp(-r * T), rel=1e-12)
        assert k.partial_power_moment(1.0, 0.0, INF) == pytest.approx(math.exp(-r * T), rel=1e-12)


class TestDistribution:
    def test_median(self):
        assert BASE.cdf(math.exp(BASE.mu)) == pytest.approx(0.5, abs=1e-15)
        assert BASE.quantile(0.5) == pytest.approx(math.exp(BASE.mu), rel=1e-15)

    def test_limits(self):
        assert BASE.cdf(1e-300) == 0.0
        assert BASE.cdf(1e300) == 1.0

    def test_cdf_at_one(self):
        assert BASE.cdf(1.0) == pytest.approx(PHI_035, abs=1e-15)

    def test_cdf_against_monte_carlo(self):
        x = mc_log_rho(BASE)
        assert np.mean(x <= 0.0) == pytest.approx(PHI_035, abs=5e-4)

    def test_quantile_standard_normal(self):
        k = PricingKernel(0.0, 1.0)
        assert k.quantile(0.975) == pytest.approx(math.exp(Z_975), rel=1e-13)

    def test_round_trip(self):
        p = np.linspace(0.01, 0.99, 99)
        np.testing.assert_allclose(BASE.cdf(BASE.quantile(p)), p, rtol=1e-12)

    def test_upper_quantile_tail(self):
        w = np.array([1e-20, 1e-10, 0.3])
        np.testing.assert_allclose(BASE.sf(BASE.upper_quantile(w)), w, rtol=1e-12)

    @pytest.mark.parametrize("bad", [0.0, -1.0])
    def test_cdf_domain(self, bad):
        with pytest.raises(DomainError):
            BASE.cdf(bad)

    @pytest.mark.parametrize("bad", [0.0, 1.0, -0.1, 1.5])
    def test_quantile_domain(self, bad):
        with pytest.raises(DomainError):
            BASE.quantile(bad)

    @given(st.floats(-30, 30), st.floats(0.01, 0.5))
    def test_cdf_strictly_increasing(self, s, h):
        x1 = BASE.from_state(s)
        x2 = BASE.from_state(s + h)
        assert BASE.cdf(x1) <= BASE.cdf(x2)
        if -8 < s < 8:
            assert BASE.cdf(x1) < BASE.cdf(x2)


class TestPartialPowerMoment:
    def test_indicator(self):
        a, b = 0.7, 1.3
        assert BASE.partial_power_moment(0.0, a, b) == pytest.approx(BASE.cdf(b) - BASE.cdf(a), rel=1e-14)

    def test_frozen_value(self):
        assert BASE.partial_power_moment(-1.0, 0.0, 1.0) == pytest.approx(PPM_NEG1_0_1, rel=1e-13)

    def test_monte_carlo(self):
        x = mc_log_rho(BASE)
        mc = np.mean(np.exp(-x) * (x <= 0.0))
        assert f"{mc:.3g}" == f"{BASE.partial_power_moment(-1.0, 0.0, 1.0):.3g}"

    def test_order_violation(self):
        with pytest.raises(DomainError):
            BASE.partial_power_moment(1.0, 2.0, 1.0)

    def test_far_upper_tail_no_cancellation(self):
        # both limits deep in the upper tail: direct difference of cdfs would be 0
        a, b = BASE.upper_quantile(1e-30), BASE.upper_quantile(1e-31)
        v = BASE.partial_power_moment(0.0, a, b)
        assert v == pytest.approx(9e-31, rel=1e-9)

    @given(
        beta=st.floats(-6, 6),
        pts=st.lists(st.floats(-6, 6), min_size=3, max_size=3),
    )
    def test_additivity(self, beta, pts):
        a, b, c = np.sort(BASE.from_state(np.array(pts)))
        whole = BASE.partial_power_moment(beta, a, c)
        parts = BASE.partial_power_moment(beta, a, b) + BASE.partial_power_moment(beta, b, c)
        assert parts == pytest.approx(whole, rel=1e-12, abs=1e-300)

    @settings(max_examples=40, deadline=None)
    @given(beta=st.floats(-5, 5), s1=st.floats(-4, 4), width=st.floats(0.05, 4))
    def test_matches_quadrature(self, beta, s1, width):
        a, b = BASE.from_state(s1), BASE.from_state(s1 + width)

        def dens(y):
            return math.exp(beta * y) * math.exp(-0.5 * ((y - BASE.mu) / BASE.sd) ** 2) / (BASE.sd * math.sqrt(2 * math.pi))

        ref, _ = integrate.quad(dens, math.log(a), math.log(b), epsabs=0, epsrel=1e-13, limit=200)
        assert BASE.partial_power_moment(beta, a, b) == pytest.approx(ref, rel=1e-9)
