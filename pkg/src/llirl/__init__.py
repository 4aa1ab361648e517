"""Lifelong reinforcement learning with an infinite mixture of environment models."""

from .envmodel import EnvModel, Mode, WindowedDataset
from .envs import NavConfig, Puddle, generate_sequence
from .harness import ExperimentConfig, run_experiment, sweep
from .lifelong import LifelongConfig, LifelongResult, run_ca, run_llirl
from .mixture import ClusterLibrary, load, save
from .policy import GaussianPolicy

__all__ = [
    "ClusterLibrary", "EnvModel", "ExperimentConfig", "GaussianPolicy", "LifelongConfig",
    "LifelongResult", "Mode", "NavConfig", "Puddle", "WindowedDataset", "generate_sequence",
    "load", "run_ca", "run_experiment", "run_llirl", "save", "sweep",
]
