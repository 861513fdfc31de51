"""Strategic content creators competing on a ridge-regularised recommender.

The platform estimates user embeddings by ridge regression with strength
lambda, creators move their content by local better responses under a
reward mechanism, and users receive the top-K items by estimated score.
"""

from .core import (
    DegenerateProjectionError,
    GameInstance,
    NoiseModel,
    UsageError,
    default_attention,
    match_score,
    project_nonneg_sphere,
)
from .dynamics import DynamicsConfig, StrategyProfile, Trace, run_dynamics
from .envgen import build_dataset_instance, build_prent, build_synthetic_market
from .estimator import EstimatedUsers, RankDeficiencyError, estimate_users, generate_ratings
from .harness import SweepResult, SweepSpec, export_results, run_cell, run_sweep
from .mechanisms import MechanismId, ScoreBoard, check_individual_monotonicity
from .theory import PreNTParams
from .welfare import nash_social_welfare, total_welfare

__version__ = "0.1.0"

__all__ = [
    "DegenerateProjectionError", "DynamicsConfig", "EstimatedUsers", "GameInstance",
    "MechanismId", "NoiseModel", "PreNTParams", "RankDeficiencyError", "ScoreBoard",
    "StrategyProfile", "SweepResult", "SweepSpec", "Trace", "UsageError",
    "build_dataset_instance", "build_prent", "build_synthetic_market",
    "check_individual_monotonicity", "default_attention", "estimate_users", "export_results",
    "generate_ratings", "match_score", "nash_social_welfare", "project_nonneg_sphere",
    "run_cell", "run_dynamics", "run_sweep", "total_welfare",
]
