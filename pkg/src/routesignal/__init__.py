"""Repeated route-choice platform under private recommendations."""

from .backend import BACKEND
from .config import ExperimentConfig, load_experiment, reference_config
from .dynamics import simulate_dynamics
from .equilibrium import bayes_wardrop, design_signal, expected_latency
from .game import (
    ConfigError,
    DefectionMatrix,
    GameConfig,
    ObedienceReport,
    SignalPolicy,
    check_obedience,
    route_latencies,
    social_cost,
    validate_config,
)
from .protocol import run_batch, run_session

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ConfigError",
    "DefectionMatrix",
    "ExperimentConfig",
    "GameConfig",
    "ObedienceReport",
    "SignalPolicy",
    "bayes_wardrop",
    "check_obedience",
    "design_signal",
    "expected_latency",
    "load_experiment",
    "reference_config",
    "route_latencies",
    "run_batch",
    "run_session",
    "simulate_dynamics",
    "social_cost",
    "validate_config",
    "__version__",
]
