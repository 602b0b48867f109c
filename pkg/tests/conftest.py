import pytest

from valuetax.dataset import JudgmentRecord, RunManifest, RunTable, pair_runs
from valuetax.taxonomy import taxonomy_from_dict


@pytest.hookimpl(tryfirst=True, hookwrapper=True)
def pytest_runtest_makereport(item, call):
    # expose per-phase outcomes so the acceptance module can print its
    # one-line pass/fail summary per criterion
    outcome = yield
    rep = outcome.get_result()
    setattr(item, "rep_" + rep.when, rep)


def make_taxonomy(micro_counts: dict[str, int]):
    """Taxonomy with the given values and per-value micro counts."""
    values = [
        {"id": vid, "label": vid.title(), "angle_deg": 360.0 * i / len(micro_counts)}
        for i, vid in enumerate(micro_counts)
    ]
    micros = [
        {"id": f"{vid}_m{k}", "label": f"{vid} micro {k}", "parent": vid}
        for vid, count in micro_counts.items()
        for k in range(1, count + 1)
    ]
    return taxonomy_from_dict({"values": values, "micro_values": micros})


def make_run(run_id: str, condition: str, rows, **manifest_kwargs):
    """RunTable from (scene, action, micro, polarity, likert) tuples."""
    manifest = RunManifest(
        run_id=run_id, model="fixture", condition=condition, **manifest_kwargs
    )
    table = RunTable(manifest=manifest)
    for scene, action, micro, polarity, likert in rows:
        record = JudgmentRecord(
            run_id=run_id, scene_id=scene, action_id=action,
            micro_value=micro, polarity=polarity, likert=likert,
        )
        table.records[record.key] = record
        table.stats.accepted += 1
    return table


def make_paired(pre_rows, post_rows):
    pre = make_run("fix-pre", "pre", pre_rows)
    post = make_run("fix-post", "post", post_rows)
    return pair_runs(pre, post, policy="strict")


@pytest.fixture
def two_value_taxonomy():
    return make_taxonomy({"care": 2, "order": 1})


@pytest.fixture
def ten_value_taxonomy():
    # one micro per value: the fast path for metric-level tests
    return make_taxonomy({f"v{i}": 1 for i in range(10)})


@pytest.fixture
def dyadic_taxonomy():
    # micro counts that are powers of two keep shift entries dyadic, so
    # invariance checks can assert exact float equality
    return make_taxonomy({"v0": 1, "v1": 2, "v2": 4, "v3": 2, "v4": 1})


@pytest.fixture
def hand_fixture(two_value_taxonomy):
    """Four samples over two values, small enough to recompute by hand."""
    pre_rows = [
        ("s1", "a1", "care_m1", 1, 3),
        ("s1", "a1", "care_m2", 1, 4),
        ("s1", "a1", "order_m1", -1, 2),
        ("s2", "a1", "care_m1", 1, 1),
        ("s2", "a1", "order_m1", 1, 3),
        ("s3", "a1", "care_m2", -1, 5),
        ("s4", "a1", "order_m1", -1, 4),
    ]
    post_rows = [
        ("s1", "a1", "care_m1", 1, 5),
        ("s1", "a1", "care_m2", 1, 4),
        ("s1", "a1", "order_m1", -1, 1),
        ("s2", "a1", "care_m1", 1, 2),
        ("s2", "a1", "order_m1", 1, 3),
        ("s3", "a1", "care_m2", -1, 2),
        ("s4", "a1", "order_m1", -1, 5),
    ]
    return make_paired(pre_rows, post_rows), two_value_taxonomy
