"""Multi-objective GP-SARSA agent: action selection and the training loop.

One GP models the scalarized Q(b, a, w).  During training every dialogue runs
under its own weight vector (sampled uniformly, or fixed), the per-turn
scalarized rewards are assembled from the two objectives, and the finished
dialogue is absorbed by the GP.  A single-objective agent is the fixed-weight
special case whose reward constants are scaled in advance.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .env.dialogue import DialogueEnv, DialogueEpisode
from .gp import GpPosterior, ProtocolError, Transition
from .io import TRAIN, atomic_write_text, format_csv, stream
from .kernels import KernelPoint
from .rewards import RewardSpec, WeightVector, sample_weights, turn_reward, unweighted_turn_reward

EXPLORE, GREEDY = "explore", "greedy"
RANDOM_WEIGHTS = "random"

WeightSource = Union[str, WeightVector]


class TrainingError(RuntimeError):
    def __init__(self, message: str, episode: int):
        super().__init__(f"episode {episode}: {message}")
        self.episode = episode


def select_action(gp: GpPosterior, belief: np.ndarray, w: WeightVector, legal: Sequence[int],
                  mode: str, rng: np.random.Generator | None = None) -> int:
    """Greedy: argmax posterior mean.  Explore: argmax of one posterior draw per action.

    Ties go to the lowest action id.
    """
    if len(legal) == 0:
        raise ProtocolError("no legal actions")
    actions = sorted(legal)
    means, variances = gp.predict_actions(belief, w.as_array(), actions)
    if mode == GREEDY:
        scores = means
    elif mode == EXPLORE:
        scores = means + np.sqrt(variances) * rng.standard_normal(len(actions))
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return actions[int(np.argmax(scores))]


class MorlAgent:
    """Policy handle over a GP posterior.

    ``prescalarized`` marks a single-objective agent: its RewardSpec already
    holds the weighted constants and rewards are used as they are, while the
    weight vector only enters the kernel as a fixed anchor.
    """

    def __init__(self, gp: GpPosterior, prescalarized: bool = False):
        self.gp = gp
        self.prescalarized = prescalarized

    def select_action(self, belief, w, legal, mode, rng):
        return select_action(self.gp, belief, w, legal, mode, rng)

    def rewards(self, episode: DialogueEpisode, w: WeightVector, spec: RewardSpec) -> list[float]:
        last = episode.turn_count - 1
        if self.prescalarized:
            return [unweighted_turn_reward(i == last, episode.success, spec)
                    for i in range(episode.turn_count)]
        return [turn_reward(i == last, episode.success, w, spec) for i in range(episode.turn_count)]

    def transitions(self, episode: DialogueEpisode, rewards: Sequence[float]) -> list[Transition]:
        last = episode.turn_count - 1
        return [Transition(KernelPoint(t.belief, t.action, t.weights.as_array()), r, i == last)
                for i, (t, r) in enumerate(zip(episode.turns, rewards))]


@dataclass(frozen=True)
class EpisodeLog:
    episode: int
    w_s: float
    w_l: float
    success: bool
    turns: int
    scalarized_return: float
    dict_size: int


LOG_COLUMNS = ("episode", "w_s", "success", "turns", "scalarized_return", "dict_size")


def train(env: DialogueEnv, gp: GpPosterior, n_dialogues: int, weight_source: WeightSource,
          spec: RewardSpec, seed: int, *, prescalarized: bool = False, start_episode: int = 0,
          stream_key: Sequence[int] = (TRAIN,)) -> list[EpisodeLog]:
    """Run ``n_dialogues`` training dialogues and absorb each one into ``gp``.

    Dialogue ``i`` draws all randomness from ``stream(seed, *stream_key, i)``.
    With ``weight_source == "random"`` the weight vector is drawn first from
    that stream; otherwise the given WeightVector is used throughout.
    """
    if n_dialogues < 1:
        raise ValueError("n_dialogues must be >= 1")
    agent = MorlAgent(gp, prescalarized)
    log = []
    for i in range(start_episode, start_episode + n_dialogues):
        rng = stream(seed, *stream_key, i)
        w = sample_weights(rng) if weight_source == RANDOM_WEIGHTS else weight_source
        try:
            episode = env.run(agent, w, spec, EXPLORE, rng)
        except Exception as exc:
            raise TrainingError(str(exc), i) from exc
        rewards = agent.rewards(episode, w, spec)
        gp.observe_episode(agent.transitions(episode, rewards), spec.discount)
        total = 0.0
        for r in rewards:
            total += r
        log.append(EpisodeLog(i, w.w_s, w.w_l, episode.success, episode.turn_count, total,
                              gp.dictionary_size))
    return log


def evaluate(env: DialogueEnv, gp: GpPosterior, w: WeightVector, spec: RewardSpec, n: int,
             seed: int, stream_key: Sequence[int]) -> list[DialogueEpisode]:
    """Greedy dialogues against a frozen posterior; dialogue ``i`` uses ``stream(seed, *key, i)``."""
    agent = MorlAgent(gp)
    return [env.run(agent, w, spec, GREEDY, stream(seed, *stream_key, i)) for i in range(n)]


def write_training_log(path: str | Path, log: Sequence[EpisodeLog], provenance=None) -> None:
    rows = [(e.episode, e.w_s, e.success, e.turns, e.scalarized_return, e.dict_size) for e in log]
    atomic_write_text(path, format_csv(LOG_COLUMNS, rows, provenance))
