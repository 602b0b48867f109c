import json

import pytest

from valuetax.errors import TaxonomyError
from valuetax.taxonomy import (
    circumplex_order,
    default_taxonomy,
    load_taxonomy,
    micro_values_of,
    serialize,
    taxonomy_from_dict,
)

CANONICAL_ORDER = [
    "self_direction", "stimulation", "hedonism", "achievement", "power",
    "security", "conformity", "tradition", "benevolence", "universalism",
]


def test_default_taxonomy_counts():
    t = default_taxonomy()
    assert len(t.values) == 10
    assert len(t.micro_values) == 56


def test_default_assignment_partitions_all_micro_values():
    t = default_taxonomy()
    total = 0
    for vid in t.value_ids:
        members = micro_values_of(t, vid)
        assert members
        total += len(members)
    assert total == 56


def test_partition_every_micro_has_exactly_one_parent():
    t = default_taxonomy()
    for m in t.micro_values:
        owners = [vid for vid in t.value_ids if m.id in micro_values_of(t, vid)]
        assert owners == [m.parent]


def test_minimal_taxonomy_is_valid():
    t = taxonomy_from_dict({
        "values": [{"id": "v", "label": "V", "angle_deg": 0.0}],
        "micro_values": [{"id": "m", "label": "M", "parent": "v"}],
    })
    assert micro_values_of(t, "v") == ("m",)
    assert circumplex_order(t) == ["v"]


def test_micro_value_with_two_parents_rejected():
    with pytest.raises(TaxonomyError, match="duplicate micro-value"):
        taxonomy_from_dict({
            "values": [
                {"id": "a", "label": "A", "angle_deg": 0.0},
                {"id": "b", "label": "B", "angle_deg": 90.0},
            ],
            "micro_values": [
                {"id": "m", "label": "M", "parent": "a"},
                {"id": "m", "label": "M", "parent": "b"},
            ],
        })


@pytest.mark.parametrize("mutation,match", [
    (lambda d: d["values"].append({"id": "a", "label": "dup", "angle_deg": 5.0}), "duplicate value"),
    (lambda d: d["micro_values"].append({"id": "m2", "label": "x", "parent": "ghost"}), "unknown parent"),
    (lambda d: d["values"].append({"id": "lonely", "label": "L", "angle_deg": 7.0}), "no micro-values"),
    (lambda d: d["values"][0].update(angle_deg="north"), "malformed angle"),
    (lambda d: d["values"][0].update(angle_deg=361.0), "outside"),
])
def test_invalid_documents_rejected(mutation, match):
    doc = {
        "values": [
            {"id": "a", "label": "A", "angle_deg": 0.0},
            {"id": "b", "label": "B", "angle_deg": 180.0},
        ],
        "micro_values": [
            {"id": "m", "label": "M", "parent": "a"},
            {"id": "n", "label": "N", "parent": "b"},
        ],
    }
    mutation(doc)
    with pytest.raises(TaxonomyError, match=match):
        taxonomy_from_dict(doc)


def test_duplicate_angles_rejected():
    with pytest.raises(TaxonomyError, match="distinct"):
        taxonomy_from_dict({
            "values": [
                {"id": "a", "label": "A", "angle_deg": 10.0},
                {"id": "b", "label": "B", "angle_deg": 10.0},
            ],
            "micro_values": [
                {"id": "m", "label": "M", "parent": "a"},
                {"id": "n", "label": "N", "parent": "b"},
            ],
        })


def test_micro_values_of_unknown_value():
    t = default_taxonomy()
    with pytest.raises(TaxonomyError, match="unknown value"):
        micro_values_of(t, "nonexistent")


def test_circumplex_order_is_canonical_for_default():
    assert circumplex_order(default_taxonomy()) == CANONICAL_ORDER


def test_circumplex_order_sorts_by_angle():
    t = taxonomy_from_dict({
        "values": [
            {"id": "late", "label": "L", "angle_deg": 90.0},
            {"id": "early", "label": "E", "angle_deg": 0.0},
        ],
        "micro_values": [
            {"id": "m1", "label": "M", "parent": "late"},
            {"id": "m2", "label": "M", "parent": "early"},
        ],
    })
    assert circumplex_order(t) == ["early", "late"]


def test_circumplex_order_is_permutation_and_stable():
    t = default_taxonomy()
    order = circumplex_order(t)
    assert sorted(order) == sorted(t.value_ids)
    assert order == circumplex_order(t)


def test_serialize_round_trip(tmp_path):
    t = default_taxonomy()
    path = tmp_path / "tax.json"
    path.write_text(json.dumps(serialize(t)))
    again = load_taxonomy(path)
    assert again.values == t.values
    assert again.micro_values == t.micro_values
    assert again.assignment == t.assignment


def test_load_taxonomy_missing_file(tmp_path):
    with pytest.raises(TaxonomyError, match="cannot read"):
        load_taxonomy(tmp_path / "absent.json")
