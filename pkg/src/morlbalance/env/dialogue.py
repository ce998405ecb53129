"""Summary action space, dialogue episodes, success evaluation and the episode runner."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from ..rewards import ObjectiveReward, RewardSpec, WeightVector
from .belief import BeliefState, belief_update, offer_entity
from .ontology import DomainOntology
from .user import (DEFAULT_PATIENCE, AgendaState, SystemAct, UserAct, UserGoal, corrupt_act, initial_act,
                   sample_goal, user_step)

DEFAULT_MAX_TURNS = 25
GLOBAL_ACTS = ("inform_offer", "inform_requested", "repeat", "bye")


class DialogueRuntimeError(RuntimeError):
    """A component failed while running a dialogue; carries the turn index."""

    def __init__(self, message: str, turn: int):
        super().__init__(f"turn {turn}: {message}")
        self.turn = turn


class ActionSpace:
    """Dense ids: request(slot) per slot, confirm(slot) per slot, then the global acts."""

    def __init__(self, ontology: DomainOntology):
        self.slots = ontology.slot_names
        n = len(self.slots)
        self.names = ([f"request({s})" for s in self.slots]
                      + [f"confirm({s})" for s in self.slots] + list(GLOBAL_ACTS))
        self.offer, self.inform_requested, self.repeat, self.bye = range(2 * n, 2 * n + 4)

    def __len__(self) -> int:
        return len(self.names)

    def legal(self, b: BeliefState) -> list[int]:
        n = len(self.slots)
        ids = list(range(n))
        ids += [n + i for i in range(n) if b.top_value(i) is not None]
        ids.append(self.offer)
        if b.offered is not None:
            ids.append(self.inform_requested)
        ids += [self.repeat, self.bye]
        return ids

    def realize(self, action: int, b: BeliefState) -> SystemAct:
        """Concrete system act for ``action`` given the current belief."""
        n = len(self.slots)
        if not 0 <= action < len(self):
            raise ValueError(f"action id {action} outside [0, {len(self)})")
        if action < n:
            return SystemAct("request", slot=self.slots[action])
        if action < 2 * n:
            i = action - n
            return SystemAct("confirm", slot=self.slots[i], value=b.top_value(i))
        if action == self.offer:
            return SystemAct("inform_offer", entity=offer_entity(b))
        if action == self.inform_requested:
            return SystemAct("inform_requested", entity=b.offered, items=b.pending())
        if action == self.repeat:
            return SystemAct("repeat")
        return SystemAct("bye")


@dataclass
class Turn:
    belief: np.ndarray
    action: int
    weights: WeightVector
    system_act: SystemAct
    user_act: UserAct | None        # observed (possibly corrupted); None after system bye
    confidence: float
    reward: ObjectiveReward | None = None


@dataclass
class DialogueEpisode:
    goal: UserGoal
    turns: list[Turn] = field(default_factory=list)
    success: bool = False
    cutoff: bool = False
    ended_by: str = ""

    @property
    def turn_count(self) -> int:
        return len(self.turns)

    def to_transcript(self) -> dict:
        return {
            "goal": {"constraints": dict(self.goal.constraints), "requests": list(self.goal.requests)},
            "success": self.success,
            "cutoff": self.cutoff,
            "ended_by": self.ended_by,
            "turns": [{
                "action": t.action,
                "system": t.system_act.to_dict(),
                "user": None if t.user_act is None else t.user_act.to_dict(),
                "confidence": t.confidence,
            } for t in self.turns],
        }


def evaluate_success(episode: DialogueEpisode, ontology: DomainOntology) -> bool:
    """True iff an offered entity meets every goal constraint and all goal
    requests were answered for that entity before the dialogue ended."""
    if episode.cutoff:
        return False
    answered: dict[int, set] = {}
    for turn in episode.turns:
        act = turn.system_act
        if act.kind == "inform_offer" and act.entity is not None:
            answered.setdefault(act.entity, set())
        elif act.kind == "inform_requested" and act.entity in answered:
            answered[act.entity].update(act.items)
    goal = episode.goal
    return any(goal.satisfied_by(ontology.entities[e]) and set(goal.requests) <= items
               for e, items in answered.items())


class Agent(Protocol):
    def select_action(self, belief: np.ndarray, w: WeightVector, legal: Sequence[int],
                      mode: str, rng: np.random.Generator) -> int: ...


@dataclass
class DialogueEnv:
    ontology: DomainOntology
    ser: float = 0.15
    max_turns: int = DEFAULT_MAX_TURNS
    patience: int = DEFAULT_PATIENCE

    def __post_init__(self):
        if not 0.0 <= self.ser <= 1.0:
            raise ValueError(f"ser must lie in [0, 1], got {self.ser}")
        if self.max_turns < 1:
            raise ValueError("max_turns must be >= 1")
        self.actions = ActionSpace(self.ontology)
        self.belief_dim = BeliefState.dimension(self.ontology)

    def run(self, agent: Agent, w: WeightVector, spec: RewardSpec, mode: str,
            rng: np.random.Generator) -> DialogueEpisode:
        return run_dialogue(agent, self, w, spec, mode, rng)


def run_dialogue(agent: Agent, env: DialogueEnv, w: WeightVector, spec: RewardSpec,
                 mode: str, rng: np.random.Generator) -> DialogueEpisode:
    """Simulate one dialogue: agent act, user reply, noisy channel, belief update."""
    o = env.ontology
    goal = sample_goal(o, rng)
    state = AgendaState(goal, patience=env.patience)
    opening = initial_act(goal, rng)
    state.last_act = opening
    obs = corrupt_act(opening, env.ser, rng, o)
    b = belief_update(BeliefState.initial(o), obs.act, obs.confidence)
    episode = DialogueEpisode(goal)
    for t in range(env.max_turns):
        try:
            vec = b.vector()
            action = agent.select_action(vec, w, env.actions.legal(b), mode, rng)
            sys_act = env.actions.realize(action, b)
            b = b.copy()
            if sys_act.kind == "inform_offer":
                if sys_act.entity != b.offered:
                    b.informed = set()
                b.offered = sys_act.entity
            elif sys_act.kind == "inform_requested":
                b.informed |= set(sys_act.items)
            if sys_act.kind == "bye":
                episode.turns.append(Turn(vec, action, w, sys_act, None, 1.0))
                episode.ended_by = "system"
                break
            true_act = user_step(state, sys_act, o, rng)
            obs = corrupt_act(true_act, env.ser, rng, o)
            episode.turns.append(Turn(vec, action, w, sys_act, obs.act, obs.confidence))
            if true_act.kind == "bye":
                episode.ended_by = "user"
                break
            b = belief_update(b, obs.act, obs.confidence)
        except Exception as exc:
            raise DialogueRuntimeError(str(exc), t) from exc
    else:
        episode.cutoff = True
        episode.ended_by = "cutoff"
    episode.success = evaluate_success(episode, o)
    last = len(episode.turns) - 1
    for i, turn in enumerate(episode.turns):
        turn.reward = spec.objective(i == last, episode.success)
    return episode


def write_transcripts(path, episodes: Sequence[DialogueEpisode]) -> None:
    from ..io import atomic_write_text
    atomic_write_text(path, json.dumps([e.to_transcript() for e in episodes], indent=1) + "\n")
