"""Bandit phase retrieval: rewards are ``<A, theta*>^2`` plus Gaussian noise.

Modules:

* :mod:`.core` environment, sampling, trajectories and regret.
* :mod:`.estimator` constrained least squares and its helpers.
* :mod:`.policies` adaptive warm start, explore-then-commit and baselines.
* :mod:`.analysis` closed-form quantities and Monte Carlo checks.
* :mod:`.harness` experiment sweeps, CSV/SVG output and the CLI.
"""

from .core import Bandit, Environment, RngState, Trajectory, cumulative_regret, simple_regret
from .estimator import EstimatorProblem, FeasibleSet, HalfSpace, SolverConfig, constrained_least_squares
from .policies import EtcConfig, WarmStartConfig, explore_then_commit, full_policy_run, warm_start

__version__ = "0.1.0"

__all__ = [
    "Bandit",
    "Environment",
    "EstimatorProblem",
    "EtcConfig",
    "FeasibleSet",
    "HalfSpace",
    "RngState",
    "SolverConfig",
    "Trajectory",
    "WarmStartConfig",
    "constrained_least_squares",
    "cumulative_regret",
    "explore_then_commit",
    "full_policy_run",
    "simple_regret",
    "warm_start",
]
