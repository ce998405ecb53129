"""Focus belief tracking over constraint slots plus dialogue summary features.

Per slot the belief is a distribution over ``[*values, dontcare, none]``.
The flattened vector view concatenates the slot distributions and appends
summary features: the top non-"none" probability of every slot, then
offer-made, requests-pending and filled-request-fraction indicators.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ontology import DomainOntology, OntologyError, db_lookup
from .user import DONTCARE, UserAct

N_EXTRA_SUMMARY = 3


def focus_update(dist: np.ndarray, index: int, confidence: float) -> np.ndarray:
    """``new(v) = (1 - c) * old(v) + c * [v == observed]``, renormalized."""
    new = (1.0 - confidence) * dist
    new[index] += confidence
    return new / new.sum()


@dataclass
class BeliefState:
    ontology: DomainOntology
    slots: list[np.ndarray]
    requested: set = field(default_factory=set)
    offered: int | None = None
    informed: set = field(default_factory=set)

    @classmethod
    def initial(cls, ontology: DomainOntology) -> "BeliefState":
        slots = []
        for _, values in ontology.constraint_slots:
            dist = np.zeros(len(values) + 2)
            dist[-1] = 1.0
            slots.append(dist)
        return cls(ontology, slots)

    @staticmethod
    def dimension(ontology: DomainOntology) -> int:
        n = sum(len(v) + 2 for _, v in ontology.constraint_slots)
        return n + len(ontology.constraint_slots) + N_EXTRA_SUMMARY

    def copy(self) -> "BeliefState":
        return BeliefState(self.ontology, [d.copy() for d in self.slots], set(self.requested),
                           self.offered, set(self.informed))

    def _labels(self, i: int) -> list[str]:
        return self.ontology.constraint_slots[i][1] + [DONTCARE, "none"]

    def top_value(self, i: int) -> str | None:
        """Most probable hypothesis of slot ``i``; None when "none" dominates."""
        dist = self.slots[i]
        k = int(np.argmax(dist))
        if k == len(dist) - 1:
            return None
        return self._labels(i)[k]

    def query(self) -> dict[str, str]:
        """Database constraints implied by the current top hypotheses."""
        q = {}
        for i, slot in enumerate(self.ontology.slot_names):
            v = self.top_value(i)
            if v is not None and v != DONTCARE:
                q[slot] = v
        return q

    def offer_consistent(self) -> bool:
        if self.offered is None:
            return False
        entity = self.ontology.entities[self.offered]
        return all(entity[s] == v for s, v in self.query().items())

    def pending(self) -> tuple[str, ...]:
        return tuple(sorted(self.requested - self.informed))

    def summary(self) -> np.ndarray:
        tops = [float(d[:-1].max()) for d in self.slots]
        filled = len(self.requested & self.informed) / max(1, len(self.requested))
        return np.array(tops + [float(self.offer_consistent()),
                                float(bool(self.requested - self.informed)),
                                filled])

    def vector(self) -> np.ndarray:
        return np.concatenate(self.slots + [self.summary()])


def belief_update(b: BeliefState, act: UserAct, confidence: float) -> BeliefState:
    """Return the belief after observing ``act`` with the given confidence."""
    new = b.copy()
    names = b.ontology.slot_names
    for slot, value in act.slot_values:
        try:
            i = names.index(slot)
        except ValueError:
            raise OntologyError(f"unknown slot {slot!r}") from None
        labels = new._labels(i)
        if value not in labels[:-1]:
            raise OntologyError(f"unknown value {value!r} for slot {slot!r}")
        new.slots[i] = focus_update(new.slots[i], labels.index(value), confidence)
    if act.kind == "request":
        unknown = set(act.items) - set(b.ontology.requestables)
        if unknown:
            raise OntologyError(f"unknown requestable(s) {sorted(unknown)}")
        new.requested |= set(act.items)
    return new


def offer_entity(b: BeliefState) -> int | None:
    matches = db_lookup(b.ontology, b.query())
    return matches[0] if matches else None
