"""Reward balancing for dialogue policies with multi-objective GP-SARSA."""

from .gp import GpConfig, GpPosterior, ProtocolError, SnapshotError, Transition
from .kernels import KernelPoint, MalformedInputError, mo_kernel
from .rewards import ObjectiveReward, RewardSpec, WeightVector, scalarize, turn_reward

__version__ = "0.1.0"

__all__ = [
    "GpConfig", "GpPosterior", "KernelPoint", "MalformedInputError", "ObjectiveReward",
    "ProtocolError", "RewardSpec", "SnapshotError", "Transition", "WeightVector",
    "mo_kernel", "scalarize", "turn_reward",
]
