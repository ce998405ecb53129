"""
Sparse online Gaussian-process approximation of the scalarized Q-function.

Episodes are absorbed with the Monte-Carlo GP temporal-difference model: the
per-step rewards satisfy ``r_t = Q(x_t) - gamma * Q(x_{t+1}) + n_t`` with noise
covariance ``sigma^2 H H^T``, where ``H`` is the bidiagonal TD operator of the
episode.  Because ``H`` is invertible for a terminated episode, conditioning on
the rewards is the same as conditioning on the discounted returns-to-go
``R_t = r_t + gamma * R_{t+1}`` with i.i.d. noise ``sigma^2``.

Sparsification follows the usual approximate-linear-dependence test: a visited
point enters the dictionary only when its squared kernel-space distance from
the span of the current dictionary exceeds ``sparsify_threshold``; otherwise its
kernel vector is replaced by its projection onto the dictionary.

The delta kernel on actions makes the posterior block diagonal, so every action
keeps its own dictionary block.  Within a block we keep the Cholesky factor
``L`` of the dictionary Gram matrix and the sufficient statistics of the
projected data in the whitened coordinates ``z(x) = L^{-1} k(x)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .kernels import KernelPoint, MalformedInputError, mo_kernel

SNAPSHOT_FORMAT = "morlbalance.gp"
SNAPSHOT_VERSION = 1

# Absolute floor on the residual for dictionary admission; keeps the Gram
# factor positive definite when the threshold is 0.
_MIN_RESIDUAL = 1e-10
# Noise floor used when noise_stddev == 0.
_MIN_NOISE_VAR = 1e-12


class ProtocolError(RuntimeError):
    """An operation was called out of protocol (e.g. episode without terminal step)."""


class SnapshotError(ValueError):
    """A serialized model could not be decoded."""


@dataclass(frozen=True)
class Transition:
    point: KernelPoint
    reward: float
    is_terminal: bool = False

    def __post_init__(self):
        if not math.isfinite(self.reward):
            raise MalformedInputError(f"non-finite reward {self.reward!r}")


class _Block:
    """Dictionary and posterior statistics for a single action."""

    def __init__(self, dim: int):
        self.dim = dim
        self.features = np.zeros((0, dim))
        self.chol = np.zeros((0, 0))
        self.stat_cov = np.zeros((0, 0))   # sum z z^T
        self.stat_target = np.zeros(0)     # sum z R
        self.alpha = np.zeros(0)
        self.cov = np.zeros((0, 0))
        self.theta = np.zeros(dim)
        self.sigma = None  # set by refresh()

    @property
    def size(self) -> int:
        return self.features.shape[0]

    def whiten(self, kvec: np.ndarray) -> np.ndarray:
        return solve_triangular(self.chol, kvec, lower=True, check_finite=False)

    def add(self, x: np.ndarray, z: np.ndarray, residual: float) -> None:
        m = self.size
        chol = np.zeros((m + 1, m + 1))
        chol[:m, :m] = self.chol
        chol[m, :m] = z
        chol[m, m] = math.sqrt(residual)
        self.chol = chol
        self.features = np.vstack([self.features, x[None, :]])
        stat_cov = np.zeros((m + 1, m + 1))
        stat_cov[:m, :m] = self.stat_cov
        self.stat_cov = stat_cov
        self.stat_target = np.append(self.stat_target, 0.0)

    def refresh(self, noise_var: float, scale: float) -> None:
        m = self.size
        if m == 0:
            self.sigma = scale * np.eye(self.dim)
            return
        precision = self.stat_cov + noise_var * np.eye(m)
        precision = 0.5 * (precision + precision.T)
        prec_factor = np.linalg.cholesky(precision)
        mean_z = cho_solve((prec_factor, True), self.stat_target, check_finite=False)
        chol_inv = solve_triangular(self.chol, np.eye(m), lower=True, check_finite=False)
        self.alpha = chol_inv.T @ mean_z
        # C = K^{-1} - noise_var * L^{-T} M^{-1} L^{-1}
        prec_inv = cho_solve((prec_factor, True), np.eye(m), check_finite=False)
        cov = chol_inv.T @ (np.eye(m) - noise_var * prec_inv) @ chol_inv
        self.cov = 0.5 * (cov + cov.T)
        self.theta = scale * (self.features.T @ self.alpha)
        sigma = scale * np.eye(self.dim) - scale * scale * (
            self.features.T @ self.cov @ self.features)
        self.sigma = 0.5 * (sigma + sigma.T)


class GpPosterior:
    """Sparse GP posterior over Q(b, a, w).

    Parameters mirror the usual GP-SARSA settings: ``noise_stddev`` is the
    return noise, ``sparsify_threshold`` the admission threshold of the
    dictionary and ``dictionary_cap`` a hard limit on its total size (once
    reached, new points are projected instead of admitted).
    """

    def __init__(self, noise_stddev: float = 5.0, sparsify_threshold: float = 0.01,
                 dictionary_cap: int = 1000, kernel_scale: float = 1.0,
                 belief_dim: int | None = None, weight_dim: int = 2):
        if noise_stddev < 0 or sparsify_threshold < 0:
            raise MalformedInputError("noise_stddev and sparsify_threshold must be >= 0")
        if dictionary_cap < 1:
            raise MalformedInputError("dictionary_cap must be positive")
        if kernel_scale <= 0:
            raise MalformedInputError("kernel_scale must be positive")
        self.noise_stddev = float(noise_stddev)
        self.sparsify_threshold = float(sparsify_threshold)
        self.dictionary_cap = int(dictionary_cap)
        self.kernel_scale = float(kernel_scale)
        self.belief_dim = belief_dim
        self.weight_dim = weight_dim
        self._blocks: dict[int, _Block] = {}
        # (action, row within block) in admission order
        self._order: list[tuple[int, int]] = []
        self.n_episodes = 0

    # -- bookkeeping -------------------------------------------------------

    @property
    def noise_var(self) -> float:
        return max(self.noise_stddev ** 2, _MIN_NOISE_VAR)

    @property
    def dictionary_size(self) -> int:
        return len(self._order)

    @property
    def dictionary(self) -> list[KernelPoint]:
        points = []
        for action, row in self._order:
            x = self._blocks[action].features[row]
            points.append(KernelPoint(x[:self.belief_dim], action, x[self.belief_dim:]))
        return points

    @property
    def mean_weights(self) -> np.ndarray:
        return np.array([self._blocks[a].alpha[r] for a, r in self._order])

    @property
    def cov_weights(self) -> np.ndarray:
        n = len(self._order)
        cov = np.zeros((n, n))
        for i, (ai, ri) in enumerate(self._order):
            for j, (aj, rj) in enumerate(self._order):
                if ai == aj:
                    cov[i, j] = self._blocks[ai].cov[ri, rj]
        return cov

    def actions(self) -> list[int]:
        return sorted(self._blocks)

    def _check(self, p: KernelPoint) -> np.ndarray:
        if self.belief_dim is not None and p.belief.shape[0] != self.belief_dim:
            raise MalformedInputError(
                f"belief dimension {p.belief.shape[0]} != {self.belief_dim}")
        if p.weights.shape[0] != self.weight_dim:
            raise MalformedInputError(
                f"weight dimension {p.weights.shape[0]} != {self.weight_dim}")
        return p.features()

    def _block(self, action: int, create: bool = False) -> _Block | None:
        block = self._blocks.get(action)
        if block is None and create:
            block = _Block(self.belief_dim + self.weight_dim)
            block.refresh(self.noise_var, self.kernel_scale)
            self._blocks[action] = block
        return block

    # -- queries -----------------------------------------------------------

    def predict(self, p: KernelPoint) -> tuple[float, float]:
        """Posterior mean and variance of Q at ``p``."""
        x = self._check(p)
        prior = mo_kernel(p, p, self.kernel_scale)
        block = self._blocks.get(p.action)
        if block is None or block.size == 0:
            return 0.0, prior
        kvec = self.kernel_scale * (block.features @ x)
        mean = float(kvec @ block.alpha)
        var = prior - float(kvec @ block.cov @ kvec)
        return mean, max(var, 0.0)

    def predict_actions(self, belief: np.ndarray, weights: np.ndarray,
                        actions: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
        """Means and variances for several actions at one (belief, weights).

        Uses the primal form of the linear kernel (cached per block) and agrees
        with :meth:`predict` up to round-off.
        """
        x = np.concatenate([np.asarray(belief, dtype=float), np.asarray(weights, dtype=float)])
        if self.belief_dim is not None and x.shape[0] != self.belief_dim + self.weight_dim:
            raise MalformedInputError("belief/weight dimension mismatch")
        prior = self.kernel_scale * float(x @ x)
        means = np.zeros(len(actions))
        variances = np.full(len(actions), prior)
        for i, a in enumerate(actions):
            block = self._blocks.get(a)
            if block is None or block.size == 0:
                continue
            means[i] = block.theta @ x
            variances[i] = x @ block.sigma @ x
        return means, np.maximum(variances, 0.0)

    def residual(self, p: KernelPoint) -> float:
        """Squared kernel-space distance of ``p`` from the dictionary span."""
        x = self._check(p)
        kxx = mo_kernel(p, p, self.kernel_scale)
        block = self._blocks.get(p.action)
        if block is None or block.size == 0:
            return kxx
        z = block.whiten(self.kernel_scale * (block.features @ x))
        return max(kxx - float(z @ z), 0.0)

    # -- learning ----------------------------------------------------------

    def observe_episode(self, episode: Sequence[Transition], discount: float = 1.0) -> "GpPosterior":
        """Absorb one terminated episode; returns ``self`` for chaining."""
        if len(episode) == 0:
            raise MalformedInputError("episode is empty")
        if not 0.0 <= discount <= 1.0:
            raise MalformedInputError(f"discount {discount} outside [0, 1]")
        if not episode[-1].is_terminal:
            raise ProtocolError("final transition of an episode must be terminal")
        if any(t.is_terminal for t in episode[:-1]):
            raise ProtocolError("terminal transition before the end of the episode")
        if self.belief_dim is None:
            self.belief_dim = episode[0].point.belief.shape[0]
            self.weight_dim = episode[0].point.weights.shape[0]
        xs = [self._check(t.point) for t in episode]

        returns = np.empty(len(episode))
        acc = 0.0
        for i in range(len(episode) - 1, -1, -1):
            acc = episode[i].reward + discount * acc
            returns[i] = acc

        touched = set()
        for t, x, ret in zip(episode, xs, returns):
            block = self._block(t.point.action, create=True)
            touched.add(t.point.action)
            kxx = self.kernel_scale * float(x @ x)
            if block.size:
                z = block.whiten(self.kernel_scale * (block.features @ x))
                res = kxx - float(z @ z)
            else:
                z = np.zeros(0)
                res = kxx
            if (res > self.sparsify_threshold and res > _MIN_RESIDUAL * max(1.0, kxx)
                    and self.dictionary_size < self.dictionary_cap):
                block.add(x, z, res)
                self._order.append((t.point.action, block.size - 1))
                z = np.zeros(block.size)
                z[-1] = math.sqrt(res)
                z[:-1] = block.chol[-1, :-1]
            if z.size == 0:
                continue
            block.stat_cov += np.outer(z, z)
            block.stat_target += z * ret

        for action in sorted(touched):
            self._blocks[action].refresh(self.noise_var, self.kernel_scale)
        self.n_episodes += 1
        return self

    # -- serialization -----------------------------------------------------

    def snapshot(self, metadata: dict | None = None) -> bytes:
        """JSON serialization; ``metadata`` is stored verbatim and ignored by :meth:`restore`."""
        def mat(a):
            return [list(map(float, row)) for row in np.atleast_2d(a)] if a.size else []

        blocks = {}
        for action, b in sorted(self._blocks.items()):
            blocks[str(action)] = {
                "features": mat(b.features),
                "chol": mat(b.chol),
                "stat_cov": mat(b.stat_cov),
                "stat_target": list(map(float, b.stat_target)),
                "alpha": list(map(float, b.alpha)),
                "cov": mat(b.cov),
                "theta": list(map(float, b.theta)),
                "sigma": mat(b.sigma),
            }
        doc = {
            "format": SNAPSHOT_FORMAT,
            "version": SNAPSHOT_VERSION,
            "hyperparameters": {
                "noise_stddev": self.noise_stddev,
                "sparsify_threshold": self.sparsify_threshold,
                "dictionary_cap": self.dictionary_cap,
                "kernel_scale": self.kernel_scale,
            },
            "belief_dim": self.belief_dim,
            "weight_dim": self.weight_dim,
            "n_episodes": self.n_episodes,
            "order": [list(o) for o in self._order],
            "blocks": blocks,
        }
        if metadata is not None:
            doc["metadata"] = metadata
        return json.dumps(doc, sort_keys=True).encode("utf-8")

    @classmethod
    def restore(cls, payload: bytes) -> "GpPosterior":
        try:
            doc = json.loads(payload.decode("utf-8") if isinstance(payload, (bytes, bytearray)) else payload)
            if doc.get("format") != SNAPSHOT_FORMAT:
                raise SnapshotError(f"unexpected format tag {doc.get('format')!r}")
            if doc.get("version") != SNAPSHOT_VERSION:
                raise SnapshotError(f"unsupported snapshot version {doc.get('version')!r}")
            hp = doc["hyperparameters"]
            gp = cls(belief_dim=doc["belief_dim"], weight_dim=doc["weight_dim"], **hp)
            gp.n_episodes = doc["n_episodes"]
            dim = gp.belief_dim + gp.weight_dim if gp.belief_dim is not None else 0
            for key, data in doc["blocks"].items():
                block = _Block(dim)
                m = len(data["alpha"])
                block.features = np.array(data["features"], dtype=float).reshape(m, dim)
                block.chol = np.array(data["chol"], dtype=float).reshape(m, m)
                block.stat_cov = np.array(data["stat_cov"], dtype=float).reshape(m, m)
                block.stat_target = np.array(data["stat_target"], dtype=float)
                block.alpha = np.array(data["alpha"], dtype=float)
                block.cov = np.array(data["cov"], dtype=float).reshape(m, m)
                block.theta = np.array(data["theta"], dtype=float)
                block.sigma = np.array(data["sigma"], dtype=float).reshape(dim, dim)
                gp._blocks[int(key)] = block
            gp._order = [(int(a), int(r)) for a, r in doc["order"]]
        except SnapshotError:
            raise
        except (ValueError, KeyError, TypeError, AttributeError, UnicodeDecodeError) as exc:
            raise SnapshotError(f"corrupt GP snapshot: {exc}") from exc
        return gp


def observe_all(gp: GpPosterior, episodes: Iterable[Sequence[Transition]],
                discount: float = 1.0) -> GpPosterior:
    for episode in episodes:
        gp.observe_episode(episode, discount)
    return gp


@dataclass(frozen=True)
class GpConfig:
    noise_stddev: float = 5.0
    sparsify_threshold: float = 0.01
    dictionary_cap: int = 1000
    kernel_scale: float = 1.0

    def build(self, belief_dim: int | None = None, weight_dim: int = 2) -> GpPosterior:
        return GpPosterior(self.noise_stddev, self.sparsify_threshold, self.dictionary_cap,
                           self.kernel_scale, belief_dim, weight_dim)
