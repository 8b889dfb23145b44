import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cptportfolio.errors import DomainError, RegimeError
from cptportfolio.kernel import INF, MarketParams
from cptportfolio.preferences import GenericUtility, Identity, TverskyKahneman, TwoPieceCRRA
from cptportfolio.replication import (
    PathPoint,
    binary_power_price,
    conditional_price,
    merton_ratio,
    optimal_claim_payoff,
    optimal_path,
    replicate_binary_power,
    risky_ratio,
    underweights,
)
from cptportfolio.solver import BehavioralModel, classify_wellposedness

from conftest import BASE_UTILITY, KERNEL, MARKET, REVERSED_S, baseline_model, tk_loss_model

MARKET_2D = MarketParams(0.03, [0.05, 0.02], [[0.25, 0.0], [0.1, 0.15]], 2.0)


@pytest.fixture(scope="module")
def regime():
    m = tk_loss_model(1.0)
    return m, classify_wellposedness(m)


def merton_model(x0=1.0):
    return BehavioralModel.build(MARKET, TwoPieceCRRA(0.5, 10.0), Identity(), TverskyKahneman(0.4), x0)


class TestBinaryPower:
    @pytest.mark.parametrize("a_exp", [-8.0, -1.0, 0.0, 1.5])
    @pytest.mark.parametrize("band", [(0.0, 1.0), (0.6, 1.7), (1.2, INF), (0.0, INF)])
    def test_quadrature_matches_partial_moments(self, a_exp, band):
        for p in (PathPoint(0.0, 1.0), PathPoint(0.7, 0.8)):
            q = binary_power_price(MARKET, a_exp, *band, p)
            c = binary_power_price(MARKET, a_exp, *band, p, method="closed")
            assert q == pytest.approx(c, rel=1e-10)

    @settings(max_examples=40, deadline=None)
    @given(st.floats(-6, 2), st.floats(0.2, 1.0), st.floats(1.0, 3.0), st.floats(0.3, 3.0), st.floats(0.0, 0.95))
    def test_bands_add_up(self, a_exp, c1, c3, rho_t, t):
        p = PathPoint(t, rho_t)
        c2 = math.sqrt(c1 * c3) if c3 > c1 else c1 + 0.5
        c3 = max(c3, c2 + 0.1)
        whole = binary_power_price(MARKET, a_exp, c1, c3, p)
        parts = binary_power_price(MARKET, a_exp, c1, c2, p) + binary_power_price(MARKET, a_exp, c2, c3, p)
        assert whole > 0
        assert parts == pytest.approx(whole, rel=1e-9)

    def test_at_maturity_limit(self):
        # as t -> T the claim's value collapses to its payoff
        p = PathPoint(1.0 - 1e-10, 0.9)
        assert binary_power_price(MARKET, -2.0, 0.5, 1.0, p) == pytest.approx(0.9**-2, rel=1e-6)
        assert binary_power_price(MARKET, -2.0, 1.0, 2.0, p) == 0.0

    @pytest.mark.parametrize("market", [MARKET, MARKET_2D])
    @pytest.mark.parametrize("band", [(0.0, 1.0), (0.6, 1.7), (1.2, INF)])
    def test_delta_matches_finite_difference(self, market, band):
        p = PathPoint(0.3, 1.1)
        w = replicate_binary_power(market, -3.0, *band, p)
        h = 1e-5
        up = binary_power_price(market, -3.0, *band, PathPoint(p.t, p.rho_t * (1 + h)))
        dn = binary_power_price(market, -3.0, *band, PathPoint(p.t, p.rho_t * (1 - h)))
        rho_dx = (up - dn) / (2 * h)
        np.testing.assert_allclose(w.pi, -rho_dx * market.risk_direction(), rtol=1e-6)

    def test_rejects_bad_band(self):
        with pytest.raises(DomainError):
            binary_power_price(MARKET, 1.0, 2.0, 1.0, PathPoint(0.0, 1.0))
        with pytest.raises(DomainError):
            binary_power_price(MARKET, 1.0, 0.0, 1.0, PathPoint(1.0, 1.0))
        with pytest.raises(DomainError):
            PathPoint(0.1, 0.0)


class TestOptimalPath:
    def test_initial_wealth_is_endowment(self, regime):
        m, c = regime
        assert optimal_path(m, PathPoint(0.0, 1.0), c).x == pytest.approx(1.0, rel=1e-13)

    @pytest.mark.parametrize("p", [PathPoint(0.25, 0.7), PathPoint(0.5, 1.0), PathPoint(0.9, 1.6)])
    def test_wealth_is_conditional_price_of_terminal_claim(self, regime, p):
        m, c = regime
        x = optimal_path(m, p, c).x
        assert conditional_price(m, optimal_claim_payoff(m), p) == pytest.approx(x, rel=1e-9)

    def test_terminal_claim_matches_solver(self, regime):
        m, c = regime
        rho = np.geomspace(0.3, 3.0, 21)
        np.testing.assert_allclose(optimal_claim_payoff(m)(rho), c.claim.payoff(rho), rtol=1e-8)

    def test_portfolio_is_the_wealth_delta(self, regime):
        m, c = regime
        p, h = PathPoint(0.4, 1.2), 1e-5
        w = optimal_path(m, p, c)
        up = optimal_path(m, PathPoint(p.t, p.rho_t * (1 + h)), c).x
        dn = optimal_path(m, PathPoint(p.t, p.rho_t * (1 - h)), c).x
        np.testing.assert_allclose(w.pi, -(up - dn) / (2 * h) * MARKET.risk_direction(), rtol=1e-6)

    def test_merton_limit(self):
        m = merton_model()
        for p in (PathPoint(0.0, 1.0), PathPoint(0.6, 0.5)):
            np.testing.assert_allclose(risky_ratio(m, p), merton_ratio(MARKET, 0.5), rtol=1e-12)
            assert not underweights(m, p)
        np.testing.assert_allclose(merton_ratio(MARKET, 0.5), [2.0], rtol=1e-14)

    def test_underweight_flag_matches_ratio(self, regime):
        m, c = regime
        mert = merton_ratio(MARKET, 0.88)[0]
        for r in np.geomspace(0.4, 2.5, 15):
            p = PathPoint(0.5, float(r))
            assert underweights(m, p, c) == (risky_ratio(m, p, c)[0] < mert)

    def test_zero_endowment(self):
        m = tk_loss_model(0.0)
        w = optimal_path(m, PathPoint(0.3, 1.0))
        assert w.x == 0.0 and np.all(w.pi == 0.0)
        with pytest.raises(DomainError):
            risky_ratio(m, PathPoint(0.3, 1.0))

    def test_regime_mismatches(self):
        p = PathPoint(0.0, 1.0)
        with pytest.raises(RegimeError, match="nonnegative endowment"):
            optimal_path(tk_loss_model(-1.0), p)
        with pytest.raises(RegimeError, match="inf k"):
            optimal_path(baseline_model(1.0), p)
        with pytest.raises(RegimeError, match="reversed-S"):
            optimal_path(BehavioralModel.build(MARKET, BASE_UTILITY, TverskyKahneman(0.61), TverskyKahneman(0.69), 1.0), p)
        u = GenericUtility(np.sqrt, np.sqrt, lambda x: 0.5 / np.sqrt(x))
        with pytest.raises(RegimeError, match="CRRA"):
            optimal_path(BehavioralModel.build(MARKET, u, REVERSED_S, TverskyKahneman(0.69), 1.0), p)

    def test_merton_ratio_domain(self):
        for a in (0.0, 1.0, 1.2):
            with pytest.raises(DomainError):
                merton_ratio(MARKET, a)
