"""Long-run average values of polytopic robust MDPs via turn-based stochastic games."""

from .errors import BudgetExceeded, IterationLimitError, NotConvergedError, NumericalError, ValidationError
from .model import (
    Algorithm,
    DiscountMode,
    Objective,
    PurePolicy,
    Rmdp,
    SolveReport,
    Tbsg,
    check_rmdp,
    check_tbsg,
    dumps_rmdp,
    loads_rmdp,
    trajectory_limavg,
    validate_rmdp,
    validate_tbsg,
)
from .reduction import ReductionMap, reduce, reduction_size
from .game_engine import PolicyPair, ppe, rppi, strategy_iteration_discounted, verify_agent_policy
from .robust_baselines import robust_bellman, rrvi, rvi, solve_discounted_rmdp
from .oracle import EnumerationBudget, brute_force_tbsg_value, brute_force_value

__version__ = "0.1.0"

__all__ = [
    "Algorithm", "BudgetExceeded", "DiscountMode", "EnumerationBudget", "IterationLimitError",
    "NotConvergedError", "NumericalError", "Objective", "PolicyPair", "PurePolicy", "ReductionMap",
    "Rmdp", "SolveReport", "Tbsg", "ValidationError", "brute_force_tbsg_value", "brute_force_value",
    "check_rmdp", "check_tbsg", "dumps_rmdp", "loads_rmdp", "ppe", "reduce", "reduction_size",
    "robust_bellman", "rppi", "rrvi", "rvi", "solve_discounted_rmdp", "strategy_iteration_discounted",
    "trajectory_limavg", "validate_rmdp", "validate_tbsg", "verify_agent_policy",
]
