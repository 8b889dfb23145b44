import pytest

from cptportfolio.kernel import MarketParams, kernel_from_market
from cptportfolio.preferences import TverskyKahneman, TwoPieceCRRA, build_reversed_s
from cptportfolio.solver import BehavioralModel

MARKET = MarketParams(0.05, [0.04], [[0.2]], 1.0)
KERNEL = kernel_from_market(MARKET)
BASE_UTILITY = TwoPieceCRRA(0.88, 2.25)
REVERSED_S = build_reversed_s(KERNEL, 1.0, -0.5, 0.5)


def baseline_model(x0):
    """Reversed-S distortion on both sides: ill-posed for every x0 at these parameters."""
    return BehavioralModel.build(MARKET, BASE_UTILITY, REVERSED_S, REVERSED_S, x0)


def tk_loss_model(x0, gamma=0.69):
    """Reversed-S on gains, Tversky-Kahneman on losses: inf k is about 1.24."""
    return BehavioralModel.build(MARKET, BASE_UTILITY, REVERSED_S, TverskyKahneman(gamma), x0)


@pytest.fixture(scope="session")
def tk_solutions():
    from cptportfolio.solver import classify_wellposedness

    return {x0: classify_wellposedness(tk_loss_model(x0)) for x0 in (-1.0, 0.0, 1.0)}
