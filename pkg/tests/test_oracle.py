import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import optimize

from cptportfolio.errors import DomainError
from cptportfolio.oracle import (
    OracleConfig,
    OracleResult,
    Preferences,
    StateEconomy,
    _local_search,
    brute_force_master,
    discrete_cpt_value,
    discretize,
    exhaustive_arrangement_check,
    verify_structure,
)
from cptportfolio.preferences import Identity, TverskyKahneman, TwoPieceCRRA

from conftest import BASE_UTILITY, KERNEL, REVERSED_S, baseline_model, tk_loss_model

TK_PREFS = Preferences(BASE_UTILITY, REVERSED_S, TverskyKahneman(0.69))
BASE_PREFS = Preferences(BASE_UTILITY, REVERSED_S, REVERSED_S)


class TestDiscretize:
    @pytest.mark.parametrize("scheme", ["equal-prob", "stratified-tail"])
    def test_prices_match_the_kernel(self, scheme):
        e = discretize(KERNEL, 120, scheme)
        assert e.p.sum() == pytest.approx(1.0, abs=1e-14)
        assert e.price(np.ones(e.n)) == pytest.approx(KERNEL.mean(), rel=1e-12)
        assert np.all(e.rho > e.edges[:-1]) and np.all(e.rho < e.edges[1:])

    def test_rejects_bad_inputs(self):
        with pytest.raises(DomainError):
            discretize(KERNEL, 4)
        with pytest.raises(DomainError):
            discretize(KERNEL, 20, "random")
        with pytest.raises(DomainError):
            StateEconomy(np.array([1.0, 0.5]), np.array([0.5, 0.5]))
        with pytest.raises(DomainError):
            brute_force_master(discretize(KERNEL, 401), TK_PREFS, 1.0)


class TestDiscreteValue:
    def test_identity_weights_give_expected_utility(self):
        e = discretize(KERNEL, 30)
        x = np.linspace(-2, 3, 30)[::-1]
        prefs = Preferences(BASE_UTILITY, Identity(), Identity())
        ref = np.sum(e.p * np.where(x > 0, BASE_UTILITY.u_plus(np.maximum(x, 0)), -BASE_UTILITY.u_minus(np.maximum(-x, 0))))
        assert discrete_cpt_value(e, prefs, x) == pytest.approx(ref, rel=1e-13)

    def test_constant_claims(self):
        e = discretize(KERNEL, 40)
        assert discrete_cpt_value(e, TK_PREFS, np.full(40, 2.0)) == pytest.approx(2.0**0.88, rel=1e-13)
        assert discrete_cpt_value(e, TK_PREFS, np.full(40, -2.0)) == pytest.approx(-2.25 * 2.0**0.88, rel=1e-13)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.floats(-5, 5), min_size=16, max_size=16), st.integers(0, 15), st.floats(1e-3, 1.0))
    def test_monotone_in_each_state(self, xs, i, bump):
        e = discretize(KERNEL, 16)
        x = np.array(xs)
        y = x.copy()
        y[i] += bump
        assert discrete_cpt_value(e, TK_PREFS, y) >= discrete_cpt_value(e, TK_PREFS, x) - 1e-12

    @settings(max_examples=40, deadline=None)
    @given(st.permutations(list(range(16))), st.lists(st.floats(-5, 5), min_size=16, max_size=16))
    def test_law_invariant_under_equal_probabilities(self, perm, xs):
        e = discretize(KERNEL, 16)
        x = np.array(xs)
        assert discrete_cpt_value(e, TK_PREFS, x[list(perm)]) == pytest.approx(discrete_cpt_value(e, TK_PREFS, x), rel=1e-12, abs=1e-12)


class TestArrangement:
    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(-10, 10), min_size=8, max_size=8))
    def test_anticomonotone_is_cheapest(self, values):
        # with equal probabilities the state prices p*rho increase with rho
        e = discretize(KERNEL, 8)
        cheapest, anti = exhaustive_arrangement_check(e, values)
        assert anti == pytest.approx(cheapest, rel=1e-12, abs=1e-12)

    def test_unequal_probabilities_break_the_ordering(self):
        e = discretize(KERNEL, 8, "stratified-tail")
        cheapest, anti = exhaustive_arrangement_check(e, [0, 0, 0, 0, 0, 0, 0, -1.0])
        assert cheapest < anti - 0.1

    def test_size_limit(self):
        with pytest.raises(DomainError):
            exhaustive_arrangement_check(discretize(KERNEL, 9), np.zeros(9))


class TestStructure:
    def test_oracle_claim_passes(self):
        e = discretize(KERNEL, 100)
        r = brute_force_master(e, TK_PREFS, -1.0)
        rep = verify_structure(e, TK_PREFS, r.claim)
        assert rep.passed, [c.detail for c in rep.checks]

    @pytest.mark.parametrize("claim,name,witness", [
        ([1, 2, 1, 1, 0.5, 0.5, -1, -1], "gains-nonincreasing", (0, 1)),
        ([2, 1, 0, 0, 0, -1, -1, -1], "gains-positive", 2),
        ([2, 1, 1, 1, 1, -1, -1, -2], "single-loss-level", (5, 7)),
        ([2, 1, 1, -1, 1, 1, -1, -1], "single-loss-level", 3),
        ([-1, 2, 1, 1, 1, 1, 1, 1], "gain-event-lower-set", 1),
    ])
    def test_violations_carry_witnesses(self, claim, name, witness):
        e = discretize(KERNEL, 8)
        rep = verify_structure(e, TK_PREFS, np.array(claim, float))
        assert not rep[name].passed
        assert rep[name].witness == witness


class TestSearch:
    def test_beats_a_generic_optimizer_on_eight_states(self):
        e = discretize(KERNEL, 8, "stratified-tail")
        x0 = -1.0
        r = brute_force_master(e, TK_PREFS, x0)
        a = e.p * e.rho
        cons = {"type": "eq", "fun": lambda x: a @ x - x0}
        rng = np.random.default_rng(5)
        best = -np.inf
        for _ in range(40):
            start = rng.normal(0, 1.5, 8)
            start += (x0 - a @ start) / a.sum()
            res = optimize.minimize(lambda x: -discrete_cpt_value(e, TK_PREFS, x), start, method="SLSQP",
                                    constraints=[cons], options={"maxiter": 400})
            if abs(a @ res.x - x0) < 1e-8:
                best = max(best, -res.fun)
        assert np.isfinite(best)
        assert r.value >= best - 1e-9
        assert r.value <= best + 0.05 * abs(best)

    def test_budget_is_met(self):
        e = discretize(KERNEL, 60)
        for x0 in (-1.0, 0.0, 1.0):
            r = brute_force_master(e, TK_PREFS, x0)
            assert e.price(r.claim) == pytest.approx(x0, abs=1e-9)
            assert discrete_cpt_value(e, TK_PREFS, r.claim) == pytest.approx(r.value, rel=1e-9, abs=1e-12)

    def test_flags_ill_posed_baseline(self):
        e = discretize(KERNEL, 100)
        r = brute_force_master(e, BASE_PREFS, 1.0)
        assert r.ill_posed
        assert np.all(np.diff(r.escalation) > 0)

    def test_value_bound_triggers_escalation(self):
        e = discretize(KERNEL, 40)
        r = brute_force_master(e, TK_PREFS, 1.0, OracleConfig(value_bound=0.5))
        assert r.ill_posed

    def test_local_search_repairs_a_poor_claim(self):
        e = discretize(KERNEL, 30)
        x = np.full(30, 1.0 / KERNEL.mean())
        res = OracleResult(discrete_cpt_value(e, TK_PREFS, x), x, 30, 30, 1.0, 0.0, False, np.zeros(1))
        y = _local_search(e, TK_PREFS, res, OracleConfig())
        assert res.local_gain > 1e-3 and res.local_flag
        assert e.price(y) == pytest.approx(e.price(x), rel=1e-12)

    def test_oracle_output_is_locally_optimal(self):
        e = discretize(KERNEL, 60)
        r = brute_force_master(e, TK_PREFS, 1.0)
        assert not r.local_flag and r.local_gain < 1e-3
