"""Experiment harness: adversaries, independent evaluators, rate fits, runner and CLI"""

from .adversaries import make_adversary
from .config import ExperimentConfig, load_config, resolve_config
from .evaluators import decomposition_eval, full_swap_regret_eval, scaled_regret_series
from .rates import fit_rate
from .runner import RegretReport, run_experiment, sweep

__all__ = [
    "ExperimentConfig",
    "RegretReport",
    "decomposition_eval",
    "fit_rate",
    "full_swap_regret_eval",
    "load_config",
    "make_adversary",
    "resolve_config",
    "run_experiment",
    "scaled_regret_series",
    "sweep",
]
