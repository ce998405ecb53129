"""Domain ontologies: constraint slots, requestable items and the entity database."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np


class OntologyError(ValueError):
    """Schema violation in an ontology document or query."""


# (#constraints, #requests, #entities) of the six benchmark domains.
DOMAIN_STATS: dict[str, tuple[int, int, int]] = {
    "CamRestaurants": (3, 9, 110),
    "CamHotels": (5, 11, 33),
    "SFRestaurants": (6, 11, 271),
    "SFHotels": (6, 10, 182),
    "TV": (6, 14, 94),
    "Laptops": (11, 21, 126),
}


@dataclass
class DomainOntology:
    name: str
    constraint_slots: list[tuple[str, list[str]]]
    requestables: list[str]
    entities: list[dict[str, str]]
    _index: dict[str, dict[str, np.ndarray]] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.validate()

    @property
    def slot_names(self) -> list[str]:
        return [name for name, _ in self.constraint_slots]

    def values(self, slot: str) -> list[str]:
        for name, values in self.constraint_slots:
            if name == slot:
                return values
        raise OntologyError(f"unknown slot {slot!r}")

    def stats(self) -> tuple[int, int, int]:
        return len(self.constraint_slots), len(self.requestables), len(self.entities)

    def validate(self) -> None:
        if not self.name:
            raise OntologyError("name: must be a non-empty string")
        if not self.constraint_slots:
            raise OntologyError("slots: at least one constraint slot is required")
        seen = set()
        for name, values in self.constraint_slots:
            if name in seen:
                raise OntologyError(f"slots: duplicate slot {name!r}")
            seen.add(name)
            if len(values) < 2:
                raise OntologyError(f"slots.{name}.values: need at least two values")
            if len(set(values)) != len(values):
                raise OntologyError(f"slots.{name}.values: duplicate values")
        if not self.requestables:
            raise OntologyError("requestables: at least one requestable is required")
        if not self.entities:
            raise OntologyError("entities: at least one entity is required")
        for i, entity in enumerate(self.entities):
            for name, values in self.constraint_slots:
                if name not in entity:
                    raise OntologyError(f"entities[{i}].{name}: missing constraint slot")
                if entity[name] not in values:
                    raise OntologyError(
                        f"entities[{i}].{name}: value {entity[name]!r} not in slot values")
            for item in self.requestables:
                if item not in entity:
                    raise OntologyError(f"entities[{i}].{item}: missing requestable")
        self._index = {}
        for name, values in self.constraint_slots:
            column = np.array([e[name] for e in self.entities], dtype=object)
            self._index[name] = {v: column == v for v in values}

    def to_document(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "slots": [{"name": n, "values": list(v)} for n, v in self.constraint_slots],
            "requestables": list(self.requestables),
            "entities": [dict(e) for e in self.entities],
        }

    def save(self, path: str | Path) -> None:
        from ..io import atomic_write_text
        atomic_write_text(path, json.dumps(self.to_document(), indent=1) + "\n")


def load_ontology(source: str | Path | Mapping[str, Any]) -> DomainOntology:
    """Build a validated ontology from a document (mapping) or a JSON file path."""
    if isinstance(source, Mapping):
        doc = source
    else:
        path = Path(source)
        if not path.exists():
            raise FileNotFoundError(f"ontology file not found: {path}")
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise OntologyError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, Mapping):
        raise OntologyError("document: expected an object")
    for key in ("name", "slots", "requestables", "entities"):
        if key not in doc:
            raise OntologyError(f"{key}: missing field")
    slots = []
    for i, slot in enumerate(doc["slots"]):
        if not isinstance(slot, Mapping) or "name" not in slot or "values" not in slot:
            raise OntologyError(f"slots[{i}]: expected {{name, values}}")
        slots.append((str(slot["name"]), [str(v) for v in slot["values"]]))
    if not isinstance(doc["requestables"], list):
        raise OntologyError("requestables: expected a list")
    if not isinstance(doc["entities"], list) or not all(isinstance(e, Mapping) for e in doc["entities"]):
        raise OntologyError("entities: expected a list of objects")
    return DomainOntology(
        name=str(doc["name"]),
        constraint_slots=slots,
        requestables=[str(r) for r in doc["requestables"]],
        entities=[{str(k): str(v) for k, v in e.items()} for e in doc["entities"]],
    )


def generate_ontology(name: str, n_constraints: int, n_requests: int, n_entities: int,
                      values_per_slot: int = 5, seed: int = 0) -> DomainOntology:
    """Synthetic ontology with the requested statistics and uniform entity values."""
    if min(n_constraints, n_requests, n_entities) < 1 or values_per_slot < 2:
        raise OntologyError("generator counts must be positive (values_per_slot >= 2)")
    rng = np.random.default_rng(seed)
    slots = [(f"slot{i}", [f"s{i}v{j}" for j in range(values_per_slot)])
             for i in range(n_constraints)]
    requestables = [f"item{i}" for i in range(n_requests)]
    entities = []
    for e in range(n_entities):
        entity = {n: vals[int(rng.integers(len(vals)))] for n, vals in slots}
        entity.update({r: f"{r}_{e}" for r in requestables})
        entities.append(entity)
    return DomainOntology(name, slots, requestables, entities)


def benchmark_ontology(domain: str, values_per_slot: int = 5, seed: int = 0) -> DomainOntology:
    """Synthetic stand-in for one of the six benchmark domains."""
    if domain not in DOMAIN_STATS:
        raise OntologyError(f"unknown benchmark domain {domain!r}")
    return generate_ontology(domain, *DOMAIN_STATS[domain], values_per_slot=values_per_slot, seed=seed)


def db_lookup(ontology: DomainOntology, constraints: Mapping[str, str]) -> list[int]:
    """Indices of all entities matching every constraint, in ontology order."""
    mask = np.ones(len(ontology.entities), dtype=bool)
    for slot, value in constraints.items():
        column = ontology._index.get(slot)
        if column is None:
            raise OntologyError(f"unknown slot {slot!r}")
        hit = column.get(value)
        if hit is None:
            return []
        mask &= hit
    return [int(i) for i in np.flatnonzero(mask)]
