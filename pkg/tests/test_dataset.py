import gzip
import json
import math
import random

import pytest

from valuetax.dataset import (
    JudgmentRecord,
    RunManifest,
    ingest_run,
    manifest_from_dict,
    pair_runs,
    split_scenarios,
    swap_conditions,
    write_records,
)
from valuetax.errors import IngestError, PairingError, SplitError

from conftest import make_run


def lines_of(*docs):
    return [(i + 1, json.dumps(doc)) for i, doc in enumerate(docs)]


def record_doc(scene="s1", action="a1", micro="m1", polarity=1, likert=3, run_id="r1", **extra):
    doc = {
        "run_id": run_id, "scene_id": scene, "action_id": action,
        "micro_value": micro, "polarity": polarity, "likert": likert,
    }
    doc.update(extra)
    return doc


MANIFEST = RunManifest(run_id="r1", model="m", condition="pre")


class TestIngest:
    def test_three_valid_lines(self):
        table = ingest_run(MANIFEST, lines_of(
            record_doc(micro="m1"), record_doc(micro="m2"), record_doc(micro="m3"),
        ))
        assert len(table) == 3
        assert table.stats.accepted == 3
        assert table.stats.rejected == 0

    def test_likert_out_of_range_names_line(self):
        with pytest.raises(IngestError, match="line 2"):
            ingest_run(MANIFEST, lines_of(record_doc(), record_doc(micro="m2", likert=6)))

    def test_bad_polarity(self):
        with pytest.raises(IngestError, match="polarity"):
            ingest_run(MANIFEST, lines_of(record_doc(polarity=0)))

    def test_duplicate_key_strict(self):
        with pytest.raises(IngestError, match="duplicate key"):
            ingest_run(MANIFEST, lines_of(record_doc(likert=3), record_doc(likert=4)))

    def test_duplicate_key_last_write(self):
        table = ingest_run(
            MANIFEST, lines_of(record_doc(likert=3), record_doc(likert=4)),
            on_duplicate="last",
        )
        assert table.records[("s1", "a1", "m1")].likert == 4

    def test_unknown_field_rejected(self):
        with pytest.raises(IngestError, match="unknown fields"):
            ingest_run(MANIFEST, lines_of(record_doc(sneaky="x")))

    def test_optional_fields_accepted(self):
        table = ingest_run(MANIFEST, lines_of(record_doc(country="FR", topic="work")))
        rec = table.records[("s1", "a1", "m1")]
        assert (rec.country, rec.topic) == ("FR", "work")

    def test_run_id_mismatch(self):
        with pytest.raises(IngestError, match="does not match"):
            ingest_run(MANIFEST, lines_of(record_doc(run_id="other")))

    def test_malformed_json_names_line(self):
        with pytest.raises(IngestError, match="line 1"):
            ingest_run(MANIFEST, [(1, "{broken")])

    def test_skip_policy_collects_rejects(self):
        table = ingest_run(
            MANIFEST,
            lines_of(record_doc(), record_doc(micro="m2", likert=9), record_doc(micro="m3")),
            on_bad_line="skip",
        )
        assert len(table) == 2
        assert table.stats.rejected == 1
        assert table.stats.rejected_lines[0][0] == 2

    def test_order_invariance(self):
        docs = [record_doc(micro=f"m{i}", likert=1 + i % 5) for i in range(20)]
        shuffled = docs[:]
        random.Random(3).shuffle(shuffled)
        assert ingest_run(MANIFEST, lines_of(*docs)) == ingest_run(MANIFEST, lines_of(*shuffled))

    def test_gzip_round_trip(self, tmp_path):
        records = [
            JudgmentRecord(run_id="r1", scene_id="s1", action_id="a1",
                           micro_value=f"m{i}", polarity=1, likert=2)
            for i in range(5)
        ]
        path = tmp_path / "run.jsonl.gz"
        write_records(records, path)
        with gzip.open(path, "rt") as fh:
            assert len(fh.readlines()) == 5
        table = ingest_run(MANIFEST, path)
        assert len(table) == 5


class TestManifest:
    def test_round_trip(self):
        m = RunManifest(run_id="r", model="m", condition="post",
                        intervention="sft", shots=4, target_value="power",
                        direction="suppress")
        assert manifest_from_dict(m.to_dict()) == m

    @pytest.mark.parametrize("field,value", [
        ("intervention", "bribery"), ("condition", "mid"),
        ("direction", "sideways"), ("shots", -1),
    ])
    def test_validation(self, field, value):
        doc = {"run_id": "r", "model": "m", "condition": "pre", field: value}
        with pytest.raises(IngestError):
            manifest_from_dict(doc)


class TestPairing:
    def rows(self, n, likert=3):
        return [(f"s{i}", "a1", "m1", 1, likert) for i in range(n)]

    def test_identical_key_sets(self):
        pre = make_run("p", "pre", self.rows(5))
        post = make_run("q", "post", self.rows(5, likert=4))
        paired = pair_runs(pre, post)
        assert len(paired.samples) == 5
        assert paired.dropped_count == 0

    def test_lenient_drops_unmatched(self):
        pre = make_run("p", "pre", self.rows(5))
        post = make_run("q", "post", self.rows(4))
        paired = pair_runs(pre, post, policy="lenient")
        assert len(paired.samples) == 4
        assert paired.dropped_count == 1

    def test_strict_errors_on_unmatched(self):
        pre = make_run("p", "pre", self.rows(5))
        post = make_run("q", "post", self.rows(4))
        with pytest.raises(PairingError, match="strict pairing"):
            pair_runs(pre, post, policy="strict")

    def test_dropped_count_is_symmetric(self):
        pre = make_run("p", "pre", self.rows(4) + [("x", "a1", "m1", 1, 3)])
        post = make_run("q", "post", self.rows(4) + [("y", "a1", "m1", 1, 3)])
        assert pair_runs(pre, post).dropped_count == 2
        assert pair_runs(post, pre).dropped_count == 2

    def test_polarity_mismatch_always_errors(self):
        pre = make_run("p", "pre", [("s1", "a1", "m1", 1, 3)])
        post = make_run("q", "post", [("s1", "a1", "m1", -1, 3)])
        for policy in ("strict", "lenient"):
            with pytest.raises(PairingError, match="polarity mismatch"):
                pair_runs(pre, post, policy=policy)

    def test_swap_conditions_swaps_likerts(self):
        pre = make_run("p", "pre", [("s1", "a1", "m1", 1, 2)])
        post = make_run("q", "post", [("s1", "a1", "m1", 1, 5)])
        swapped = swap_conditions(pair_runs(pre, post))
        sample = swapped.samples[0]
        assert (sample.likert_pre, sample.likert_post) == (5, 2)


class TestSplit:
    def scenes_264(self):
        # 12 countries x 11 topics, two scenes per pair
        scenes, strata = [], {}
        for c in range(12):
            for t in range(11):
                for k in range(2):
                    sid = f"c{c}-t{t}-{k}"
                    scenes.append(sid)
                    strata[sid] = f"c{c}|t{t}"
        return scenes, strata

    def test_264_scene_split(self):
        scenes, strata = self.scenes_264()
        train, test = split_scenarios(scenes, 0.7, strata, seed=11)
        assert train.isdisjoint(test)
        assert train | test == set(scenes)
        assert len(train) == round(0.7 * 264)  # 185
        assert len(test) == 264 - 185  # 79
        # per-stratum counts are the floor or ceil of the stratum share
        for label in set(strata.values()):
            members = {s for s in scenes if strata[s] == label}
            share = 0.7 * len(members)
            assert len(members & train) in (math.floor(share), math.ceil(share))

    def test_deterministic_given_seed(self):
        scenes, strata = self.scenes_264()
        assert split_scenarios(scenes, 0.7, strata, seed=5) == split_scenarios(
            scenes, 0.7, strata, seed=5
        )

    def test_seed_changes_split(self):
        scenes, strata = self.scenes_264()
        a, _ = split_scenarios(scenes, 0.7, strata, seed=1)
        b, _ = split_scenarios(scenes, 0.7, strata, seed=2)
        assert a != b

    def test_single_scene_lands_on_one_side(self):
        train, test = split_scenarios(["only"], 0.7, {"only": "x"}, seed=0)
        assert (len(train), len(test)) in ((1, 0), (0, 1))
        assert train | test == {"only"}

    def test_default_single_stratum(self):
        train, test = split_scenarios([f"s{i}" for i in range(10)], 0.7, seed=0)
        assert len(train) == 7 and len(test) == 3

    def test_errors(self):
        with pytest.raises(SplitError, match="no scenes"):
            split_scenarios([], 0.7, {}, seed=0)
        with pytest.raises(SplitError, match="ratio"):
            split_scenarios(["s"], 1.2, {"s": "x"}, seed=0)
        with pytest.raises(SplitError, match="missing"):
            split_scenarios(["s", "t"], 0.5, {"s": "x"}, seed=0)
