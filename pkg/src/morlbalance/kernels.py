"""
Kernels over (belief, action, weight) points.

The composite kernel used by the multi-objective policy is

    k((b, a, w), (b', a', w')) = delta(a, a') * (<b, b'> + <w, w'>)

i.e. a delta kernel on the discrete system action times the sum of two plain
linear kernels, one on the belief vector and one on the scalarization weights.
An optional global ``scale`` multiplies the whole kernel; it defaults to 1.0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


class MalformedInputError(ValueError):
    """Inputs of inconsistent shape or containing non-finite values."""


@dataclass(frozen=True, eq=False)
class KernelPoint:
    belief: np.ndarray
    action: int
    weights: np.ndarray

    def __post_init__(self):
        belief = np.asarray(self.belief, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if belief.ndim != 1 or weights.ndim != 1:
            raise MalformedInputError("belief and weights must be 1-d vectors")
        if not np.all(np.isfinite(belief)):
            raise MalformedInputError("belief contains non-finite entries")
        object.__setattr__(self, "belief", belief)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "action", int(self.action))

    def features(self) -> np.ndarray:
        """Concatenated ``[belief, weights]``; the linear parts of the kernel act on this."""
        return np.concatenate([self.belief, self.weights])


def delta_kernel(a: int, a_prime: int) -> float:
    return 1.0 if a == a_prime else 0.0


def linear_kernel(x, x_prime) -> float:
    x = np.asarray(x, dtype=float)
    x_prime = np.asarray(x_prime, dtype=float)
    if x.shape != x_prime.shape or x.ndim != 1:
        raise MalformedInputError(f"dimension mismatch: {x.shape} vs {x_prime.shape}")
    return float(np.dot(x, x_prime))


def mo_kernel(p: KernelPoint, p_prime: KernelPoint, scale: float = 1.0) -> float:
    """Weight-augmented kernel: delta on actions times (belief + weight) linear kernels."""
    if p.belief.shape != p_prime.belief.shape:
        raise MalformedInputError(
            f"belief dimension mismatch: {p.belief.shape} vs {p_prime.belief.shape}")
    if p.weights.shape != p_prime.weights.shape:
        raise MalformedInputError(
            f"weight dimension mismatch: {p.weights.shape} vs {p_prime.weights.shape}")
    if p.action != p_prime.action:
        return 0.0
    return scale * (linear_kernel(p.belief, p_prime.belief)
                    + linear_kernel(p.weights, p_prime.weights))


def gram_matrix(points: Sequence[KernelPoint], scale: float = 1.0) -> np.ndarray:
    if len(points) == 0:
        raise MalformedInputError("gram_matrix needs at least one point")
    n = len(points)
    gram = np.empty((n, n))
    for i in range(n):
        gram[i, i] = mo_kernel(points[i], points[i], scale)
        for j in range(i + 1, n):
            gram[i, j] = gram[j, i] = mo_kernel(points[i], points[j], scale)
    return gram


def cross_kernel(features: np.ndarray, x: np.ndarray, scale: float = 1.0) -> np.ndarray:
    """Kernel between stacked same-action feature rows and one feature vector.

    Vectorised form used on the hot path of the GP; callers guarantee that all
    rows share the action of ``x`` so the delta factor is 1.
    """
    return scale * (features @ x)
