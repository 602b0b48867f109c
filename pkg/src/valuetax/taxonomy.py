"""The value system: values, micro-values, and the fixed assignment between them.

A taxonomy is a strict partition: every micro-value has exactly one parent
value, every value owns at least one micro-value. Circumplex angles are
presentation metadata used by the projection figures; they do not enter any
metric.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

from .errors import TaxonomyError


@dataclass(frozen=True)
class Value:
    id: str
    label: str
    circumplex_angle: float


@dataclass(frozen=True)
class MicroValue:
    id: str
    label: str
    parent: str


@dataclass(frozen=True)
class Taxonomy:
    values: tuple[Value, ...]
    micro_values: tuple[MicroValue, ...]
    # derived: value id -> ordered tuple of micro-value ids
    assignment: Mapping[str, tuple[str, ...]] = field(compare=False)

    @property
    def value_ids(self) -> list[str]:
        return [v.id for v in self.values]

    @property
    def micro_value_ids(self) -> list[str]:
        return [m.id for m in self.micro_values]

    def parent_of(self, micro_id: str) -> str:
        try:
            return self._parents[micro_id]
        except KeyError:
            raise TaxonomyError(f"unknown micro-value id: {micro_id!r}") from None

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "_parents", {m.id: m.parent for m in self.micro_values}
        )


def micro_values_of(taxonomy: Taxonomy, value_id: str) -> tuple[str, ...]:
    """Micro-value ids assigned to ``value_id`` (always non-empty)."""
    try:
        return taxonomy.assignment[value_id]
    except KeyError:
        raise TaxonomyError(f"unknown value id: {value_id!r}") from None


def circumplex_order(taxonomy: Taxonomy) -> list[str]:
    """Value ids sorted by ascending circumplex angle.

    Angles are unique within a valid taxonomy, so the order is total and
    stable across runs.
    """
    return [v.id for v in sorted(taxonomy.values, key=lambda v: v.circumplex_angle)]


def _build(values: list[Value], micro_values: list[MicroValue]) -> Taxonomy:
    """Validate the partition invariants and assemble a Taxonomy."""
    if not values:
        raise TaxonomyError("taxonomy has no values")
    if not micro_values:
        raise TaxonomyError("taxonomy has no micro-values")

    seen_v: set[str] = set()
    for v in values:
        if v.id in seen_v:
            raise TaxonomyError(f"duplicate value id: {v.id!r}")
        seen_v.add(v.id)
        if not (0.0 <= v.circumplex_angle < 360.0):
            raise TaxonomyError(
                f"value {v.id!r}: angle {v.circumplex_angle} outside [0, 360)"
            )
    angles = [v.circumplex_angle for v in values]
    if len(set(angles)) != len(angles):
        raise TaxonomyError("circumplex angles must be distinct across values")

    assignment: dict[str, list[str]] = {v.id: [] for v in values}
    seen_m: set[str] = set()
    for m in micro_values:
        if m.id in seen_m:
            # covers the two-parents case: the same id listed twice
            raise TaxonomyError(f"duplicate micro-value id: {m.id!r}")
        seen_m.add(m.id)
        if m.id in seen_v:
            raise TaxonomyError(f"id {m.id!r} used for both a value and a micro-value")
        if m.parent not in assignment:
            raise TaxonomyError(
                f"micro-value {m.id!r} refers to unknown parent {m.parent!r}"
            )
        assignment[m.parent].append(m.id)

    empty = [vid for vid, mids in assignment.items() if not mids]
    if empty:
        raise TaxonomyError(f"values with no micro-values: {empty}")

    return Taxonomy(
        values=tuple(values),
        micro_values=tuple(micro_values),
        assignment={vid: tuple(mids) for vid, mids in assignment.items()},
    )


def taxonomy_from_dict(doc: Any) -> Taxonomy:
    """Build a Taxonomy from the document format (see ``serialize``)."""
    if not isinstance(doc, dict):
        raise TaxonomyError("taxonomy document must be a JSON object")
    for key in ("values", "micro_values"):
        if key not in doc or not isinstance(doc[key], list):
            raise TaxonomyError(f"taxonomy document missing list field {key!r}")

    values = []
    for entry in doc["values"]:
        try:
            angle = float(entry["angle_deg"])
        except (KeyError, TypeError, ValueError):
            raise TaxonomyError(f"malformed angle in value entry: {entry!r}") from None
        try:
            values.append(Value(id=str(entry["id"]), label=str(entry["label"]), circumplex_angle=angle))
        except KeyError as exc:
            raise TaxonomyError(f"value entry missing field {exc}: {entry!r}") from None

    micro_values = []
    for entry in doc["micro_values"]:
        try:
            micro_values.append(
                MicroValue(id=str(entry["id"]), label=str(entry["label"]), parent=str(entry["parent"]))
            )
        except KeyError as exc:
            raise TaxonomyError(f"micro-value entry missing field {exc}: {entry!r}") from None

    return _build(values, micro_values)


def load_taxonomy(path: str | Path) -> Taxonomy:
    """Load and validate a taxonomy from a JSON document."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise TaxonomyError(f"cannot read taxonomy file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise TaxonomyError(f"taxonomy file {path} is not valid JSON: {exc}") from exc
    return taxonomy_from_dict(doc)


def serialize(taxonomy: Taxonomy) -> dict:
    """Inverse of ``taxonomy_from_dict``; round-trips exactly."""
    return {
        "values": [
            {"id": v.id, "label": v.label, "angle_deg": v.circumplex_angle}
            for v in taxonomy.values
        ],
        "micro_values": [
            {"id": m.id, "label": m.label, "parent": m.parent}
            for m in taxonomy.micro_values
        ],
    }


def default_taxonomy() -> Taxonomy:
    """The bundled 10-value, 56-micro-value taxonomy.

    Values sit at 36-degree increments in the canonical circumplex order.
    Micro-value labels are placeholders: real deployments supply their own
    taxonomy file with domain labels.
    """
    data = resources.files("valuetax.data").joinpath("default_taxonomy.json")
    return taxonomy_from_dict(json.loads(data.read_text(encoding="utf-8")))
