"""Scalarization weights, reward constants and the linear scalarization."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_SIMPLEX_TOL = 1e-12
# Sampled success weights live on a dyadic lattice of this resolution so that
# per-turn scalarized rewards and their episode sums are exact in binary
# floating point (for integer reward constants).
WEIGHT_LATTICE_BITS = 32


@dataclass(frozen=True)
class WeightVector:
    w_s: float
    w_l: float

    def __post_init__(self):
        if not (math.isfinite(self.w_s) and math.isfinite(self.w_l)):
            raise ValueError(f"non-finite weights ({self.w_s}, {self.w_l})")
        if self.w_s < 0 or self.w_l < 0 or abs(self.w_s + self.w_l - 1.0) > _SIMPLEX_TOL:
            raise ValueError(f"weights ({self.w_s}, {self.w_l}) not on the simplex")

    @classmethod
    def from_success(cls, w_s: float) -> "WeightVector":
        return cls(float(w_s), 1.0 - float(w_s))

    def as_array(self) -> np.ndarray:
        return np.array([self.w_s, self.w_l])


@dataclass(frozen=True)
class RewardSpec:
    success_reward: float = 40.0
    length_penalty: float = -2.0
    discount: float = 1.0

    def __post_init__(self):
        if not self.success_reward > 0:
            raise ValueError(f"success_reward must be > 0, got {self.success_reward}")
        if not self.length_penalty < 0:
            raise ValueError(f"length_penalty must be < 0, got {self.length_penalty}")
        if not 0.0 <= self.discount <= 1.0:
            raise ValueError(f"discount must lie in [0, 1], got {self.discount}")

    def objective(self, is_terminal: bool, success: bool) -> "ObjectiveReward":
        """Unweighted two-objective reward of one system turn."""
        return ObjectiveReward(self.success_reward if (is_terminal and success) else 0.0,
                               self.length_penalty)

    def prescaled(self, w: WeightVector) -> "RewardSpec":
        """Single-objective constants ``(w_s * r_s, w_l * r_l)``."""
        return RewardSpec(w.w_s * self.success_reward, w.w_l * self.length_penalty, self.discount)


@dataclass(frozen=True)
class ObjectiveReward:
    success_component: float
    length_component: float

    def __post_init__(self):
        if not (math.isfinite(self.success_component) and math.isfinite(self.length_component)):
            raise ValueError("objective reward components must be finite")

    def __add__(self, other: "ObjectiveReward") -> "ObjectiveReward":
        return ObjectiveReward(self.success_component + other.success_component,
                               self.length_component + other.length_component)

    def __mul__(self, factor: float) -> "ObjectiveReward":
        return ObjectiveReward(self.success_component * factor, self.length_component * factor)

    __rmul__ = __mul__


def scalarize(r: ObjectiveReward, w: WeightVector) -> float:
    return w.w_s * r.success_component + w.w_l * r.length_component


def turn_reward(turn_is_terminal: bool, success: bool, w: WeightVector, spec: RewardSpec) -> float:
    """Scalarized reward of one system turn.

    Every turn pays ``w_l * r_l``; the terminal turn of a successful dialogue
    additionally earns ``w_s * r_s``.  With ``discount == 1`` the episode sum is
    ``w_l * T * r_l + 1[success] * w_s * r_s``.
    """
    r = w.w_l * spec.length_penalty
    if turn_is_terminal and success:
        r = r + w.w_s * spec.success_reward
    return r


def unweighted_turn_reward(turn_is_terminal: bool, success: bool, spec: RewardSpec) -> float:
    """Per-turn reward of a single-objective agent whose constants are already scaled."""
    r = spec.length_penalty
    if turn_is_terminal and success:
        r = r + spec.success_reward
    return r


def sample_weights(rng: np.random.Generator) -> WeightVector:
    """Uniform success weight on [0, 1] (on a 2**-32 lattice); ``w_l = 1 - w_s``."""
    n = 1 << WEIGHT_LATTICE_BITS
    w_s = int(rng.integers(0, n + 1)) / n
    return WeightVector(w_s, 1.0 - w_s)
