"""Goal sampling, the agenda-based simulated user and its semantic error channel."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .ontology import DomainOntology

DONTCARE = "dontcare"
MAX_GOAL_REQUESTS = 3
DEFAULT_PATIENCE = 0


@dataclass(frozen=True)
class UserGoal:
    constraints: dict[str, str]
    requests: tuple[str, ...]

    def satisfied_by(self, entity: dict[str, str]) -> bool:
        return all(entity[s] == v for s, v in self.constraints.items())


@dataclass(frozen=True)
class UserAct:
    """A user dialogue act.

    ``kind`` is one of inform, affirm, deny, request, bye.  ``slot_values``
    carries (slot, value) pairs: the informed values, the affirmed value, or
    for deny the corrected value; ``denied`` is the rejected value of a deny.
    """
    kind: str
    slot_values: tuple[tuple[str, str], ...] = ()
    items: tuple[str, ...] = ()
    denied: str | None = None

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.slot_values:
            d["slot_values"] = [list(sv) for sv in self.slot_values]
        if self.items:
            d["items"] = list(self.items)
        if self.denied is not None:
            d["denied"] = self.denied
        return d


@dataclass(frozen=True)
class SystemAct:
    kind: str
    slot: str | None = None
    value: str | None = None
    entity: int | None = None
    items: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        for key in ("slot", "value", "entity"):
            if getattr(self, key) is not None:
                d[key] = getattr(self, key)
        if self.items:
            d["items"] = list(self.items)
        return d


class Observation(NamedTuple):
    act: UserAct
    confidence: float
    corrupted: bool


def sample_goal(ontology: DomainOntology, rng: np.random.Generator) -> UserGoal:
    """Goal read off a random entity, hence satisfiable by construction."""
    entity = ontology.entities[int(rng.integers(len(ontology.entities)))]
    slots = ontology.slot_names
    n_c = int(rng.integers(1, len(slots) + 1))
    chosen = sorted(int(i) for i in rng.choice(len(slots), size=n_c, replace=False))
    n_r = int(rng.integers(1, min(MAX_GOAL_REQUESTS, len(ontology.requestables)) + 1))
    items = sorted(int(i) for i in rng.choice(len(ontology.requestables), size=n_r, replace=False))
    return UserGoal(constraints={slots[i]: entity[slots[i]] for i in chosen},
                    requests=tuple(ontology.requestables[i] for i in items))


@dataclass
class AgendaState:
    goal: UserGoal
    accepted: int | None = None            # entity the user accepted as an offer
    answered: dict[int, set] = field(default_factory=dict)
    last_act: UserAct | None = None
    rejections: int = 0
    patience: int = DEFAULT_PATIENCE        # rejected offers tolerated before hanging up

    def pending(self) -> tuple[str, ...]:
        done = self.answered.get(self.accepted, set())
        return tuple(r for r in self.goal.requests if r not in done)


def initial_act(goal: UserGoal, rng: np.random.Generator) -> UserAct:
    """Opening user turn: inform one random goal constraint."""
    slots = list(goal.constraints)
    slot = slots[int(rng.integers(len(slots)))]
    return UserAct("inform", ((slot, goal.constraints[slot]),))


def _inform(goal: UserGoal, slot: str) -> UserAct:
    return UserAct("inform", ((slot, goal.constraints.get(slot, DONTCARE)),))


def _correct(goal: UserGoal, ontology: DomainOntology, entity: int | None,
             rng: np.random.Generator) -> UserAct:
    """Re-inform the first violated constraint of ``entity`` (a random one if none)."""
    if entity is not None:
        record = ontology.entities[entity]
        for slot in ontology.slot_names:
            if slot in goal.constraints and record[slot] != goal.constraints[slot]:
                return _inform(goal, slot)
    slots = [s for s in ontology.slot_names if s in goal.constraints]
    return _inform(goal, slots[int(rng.integers(len(slots)))])


def _after_offer(state: AgendaState) -> UserAct:
    # requests are popped off the agenda one at a time
    pending = state.pending()
    if pending:
        return UserAct("request", items=pending[:1])
    return UserAct("bye")


def user_step(state: AgendaState, system_act: SystemAct, ontology: DomainOntology,
              rng: np.random.Generator) -> UserAct:
    """True (uncorrupted) user reply to ``system_act``; updates ``state`` in place."""
    goal = state.goal
    kind = system_act.kind
    if kind == "request":
        act = _inform(goal, system_act.slot)
    elif kind == "confirm":
        slot, value = system_act.slot, system_act.value
        if slot not in goal.constraints:
            act = _inform(goal, slot)
        elif goal.constraints[slot] == value:
            act = UserAct("affirm", ((slot, value),))
        else:
            act = UserAct("deny", ((slot, goal.constraints[slot]),), denied=value)
    elif kind == "inform_offer":
        entity = system_act.entity
        if entity is not None and goal.satisfied_by(ontology.entities[entity]):
            if state.accepted != entity:
                state.accepted = entity
                state.answered.setdefault(entity, set())
            act = _after_offer(state)
        else:
            state.accepted = None
            state.rejections += 1
            if state.rejections > state.patience:
                act = UserAct("bye")
            else:
                act = _correct(goal, ontology, entity, rng)
    elif kind == "inform_requested":
        entity = system_act.entity
        if entity is not None and entity == state.accepted:
            state.answered[entity].update(i for i in system_act.items if i in goal.requests)
            act = _after_offer(state)
        else:
            act = _correct(goal, ontology, entity, rng)
    elif kind == "repeat":
        act = state.last_act if state.last_act is not None else _correct(goal, ontology, None, rng)
    else:
        raise ValueError(f"user cannot respond to system act {kind!r}")
    state.last_act = act
    return act


def _other_value(values: list[str], current: str, rng: np.random.Generator) -> str:
    choices = [v for v in values if v != current]
    return choices[int(rng.integers(len(choices)))]


def corrupt_act(act: UserAct, ser: float, rng: np.random.Generator,
                ontology: DomainOntology) -> Observation:
    """Pass ``act`` through the noisy channel.

    With probability ``ser`` the act is corrupted: every slot value is replaced
    by a uniformly drawn different value of the slot, and affirm/deny swap
    polarity.  Confidence is drawn from U(0.7, 1.0) for clean acts and from
    U(0.3, 0.9) for corrupted ones.
    """
    corrupted = bool(rng.random() < ser)
    if not corrupted:
        return Observation(act, float(rng.uniform(0.7, 1.0)), False)
    confidence = float(rng.uniform(0.3, 0.9))
    if act.kind == "inform":
        pairs = tuple((s, _other_value(ontology.values(s), v, rng)) for s, v in act.slot_values)
        act = UserAct("inform", pairs)
    elif act.kind == "affirm":
        (slot, value), = act.slot_values
        act = UserAct("deny", ((slot, _other_value(ontology.values(slot), value, rng)),), denied=value)
    elif act.kind == "deny":
        (slot, _), = act.slot_values
        act = UserAct("affirm", ((slot, act.denied),))
    return Observation(act, confidence, True)
