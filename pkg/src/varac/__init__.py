"""Variance-constrained actor-critic for average-reward MDPs with overparameterised ReLU networks."""

from .driver import IterationMetrics, schedules, varac_run
from .envs import EnvSpec, generate, portfolio
from .learner import LearnerConfig, NetSpec
from .mdp import StationaryPolicy, TabularMdp, exact_evaluation, load_mdp, loads_mdp
from .oracle import SaddleSolution, saddle_search

__version__ = "0.1.0"

__all__ = [
    "EnvSpec", "IterationMetrics", "LearnerConfig", "NetSpec", "SaddleSolution",
    "StationaryPolicy", "TabularMdp", "exact_evaluation", "generate", "load_mdp",
    "loads_mdp", "portfolio", "saddle_search", "schedules", "varac_run",
]
