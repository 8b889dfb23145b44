"""Portfolio selection under cumulative prospect theory in a complete lognormal market."""

__version__ = "0.1.0"

from .errors import DomainError, EvaluationError, IntegrabilityError, ModelError, RegimeError
from .kernel import INF, MarketParams, PricingKernel, kernel_from_market
from .preferences import (
    ConstructedReversedS,
    GenericUtility,
    Identity,
    PowerHead,
    Tabulated,
    TverskyKahneman,
    TwoPieceCRRA,
    build_reversed_s,
    monotonicity_check,
    reversed_s_from_params,
    validate_distortion,
    validate_utility,
)
from .choquet import DiscreteClaim, QuantileFn, choquet_value_discrete, choquet_value_quantile
from .solver import (
    BehavioralModel,
    Classification,
    Tag,
    TerminalClaim,
    classify_wellposedness,
    k_of_c,
    phi,
    solve_master,
    solve_negative_part,
    solve_positive_part,
)
from .replication import PathPoint, merton_ratio, optimal_path, replicate_binary_power, risky_ratio
from .oracle import OracleConfig, Preferences, StateEconomy, brute_force_master, discretize, verify_structure
