"""Multi-armed bandits with a budget of best-action queries."""
from .core import QueryBudget, RoundRecord, RunResult, enforce_budget, pseudo_regret, simulate_run
from .envs import ArmDistribution, CorrelatedSpec, InstanceSpec, LBStochasticSpec
from .errors import AggregationError, AnalysisError, ConfigError, InputError
from .policies import ArmStats, PolicySpec

__all__ = [
    "AggregationError", "AnalysisError", "ArmDistribution", "ArmStats", "ConfigError",
    "CorrelatedSpec", "InputError", "InstanceSpec", "LBStochasticSpec", "PolicySpec",
    "QueryBudget", "RoundRecord", "RunResult", "enforce_budget", "pseudo_regret", "simulate_run",
]

__version__ = "0.1.0"
