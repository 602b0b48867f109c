"""Judgment data model: ingestion, pre/post pairing, scenario splitting.

Runs are line-delimited JSON so large elicitations stream; a run table keys
records by (scene, action, micro-value) and a paired table inner-joins two
runs on that key.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import IngestError, PairingError, SplitError
from .ioutils import iter_lines, open_text

logger = logging.getLogger(__name__)

INTERVENTIONS = ("none", "prompt_steer", "sft", "dpo")
DIRECTIONS = ("reinforce", "suppress")
CONDITIONS = ("pre", "post")

#: JSONL record fields; the trailing two are optional.
RECORD_FIELDS = ("run_id", "scene_id", "action_id", "micro_value", "polarity", "likert")
OPTIONAL_RECORD_FIELDS = ("country", "topic")


@dataclass(frozen=True)
class RunManifest:
    run_id: str
    model: str
    condition: str
    intervention: str = "none"
    shots: int = 0
    target_value: str | None = None
    direction: str = "reinforce"

    def __post_init__(self) -> None:
        if self.intervention not in INTERVENTIONS:
            raise IngestError(f"unknown intervention {self.intervention!r}")
        if self.condition not in CONDITIONS:
            raise IngestError(f"condition must be pre or post, got {self.condition!r}")
        if self.direction not in DIRECTIONS:
            raise IngestError(f"unknown direction {self.direction!r}")
        if not isinstance(self.shots, int) or self.shots < 0:
            raise IngestError(f"shots must be a non-negative integer, got {self.shots!r}")

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "model": self.model,
            "condition": self.condition,
            "intervention": self.intervention,
            "shots": self.shots,
            "target_value": self.target_value,
            "direction": self.direction,
        }


def manifest_from_dict(doc: Mapping) -> RunManifest:
    try:
        return RunManifest(
            run_id=str(doc["run_id"]),
            model=str(doc["model"]),
            condition=str(doc["condition"]),
            intervention=str(doc.get("intervention", "none")),
            shots=int(doc.get("shots", 0)),
            target_value=doc.get("target_value"),
            direction=str(doc.get("direction", "reinforce")),
        )
    except KeyError as exc:
        raise IngestError(f"run manifest missing field {exc}") from None


@dataclass(frozen=True)
class JudgmentRecord:
    run_id: str
    scene_id: str
    action_id: str
    micro_value: str
    polarity: int
    likert: int
    country: str | None = None
    topic: str | None = None

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.scene_id, self.action_id, self.micro_value)

    def to_dict(self) -> dict:
        doc = {
            "run_id": self.run_id,
            "scene_id": self.scene_id,
            "action_id": self.action_id,
            "micro_value": self.micro_value,
            "polarity": self.polarity,
            "likert": self.likert,
        }
        if self.country is not None:
            doc["country"] = self.country
        if self.topic is not None:
            doc["topic"] = self.topic
        return doc


def _parse_record(doc: Mapping, lineno: int) -> JudgmentRecord:
    unknown = set(doc) - set(RECORD_FIELDS) - set(OPTIONAL_RECORD_FIELDS)
    if unknown:
        raise IngestError(f"line {lineno}: unknown fields {sorted(unknown)}")
    missing = [f for f in RECORD_FIELDS if f not in doc]
    if missing:
        raise IngestError(f"line {lineno}: missing fields {missing}")

    polarity = doc["polarity"]
    if polarity not in (1, -1):
        raise IngestError(f"line {lineno}: polarity must be +1 or -1, got {polarity!r}")
    likert = doc["likert"]
    if not isinstance(likert, int) or isinstance(likert, bool) or not 1 <= likert <= 5:
        raise IngestError(f"line {lineno}: likert out of range 1..5: {likert!r}")

    return JudgmentRecord(
        run_id=str(doc["run_id"]),
        scene_id=str(doc["scene_id"]),
        action_id=str(doc["action_id"]),
        micro_value=str(doc["micro_value"]),
        polarity=int(polarity),
        likert=likert,
        country=doc.get("country"),
        topic=doc.get("topic"),
    )


@dataclass
class IngestStats:
    accepted: int = 0
    rejected: int = 0
    rejected_lines: list[tuple[int, str]] = field(default_factory=list)


@dataclass
class RunTable:
    manifest: RunManifest
    records: dict[tuple[str, str, str], JudgmentRecord] = field(default_factory=dict)
    stats: IngestStats = field(default_factory=IngestStats)

    def __eq__(self, other: object) -> bool:
        # ingest statistics are provenance, not content
        if not isinstance(other, RunTable):
            return NotImplemented
        return self.manifest == other.manifest and self.records == other.records

    def __len__(self) -> int:
        return len(self.records)

    def scene_ids(self) -> set[str]:
        return {key[0] for key in self.records}


def ingest_run(
    manifest: RunManifest,
    lines: Iterable[tuple[int, str]] | str | Path,
    on_duplicate: str = "error",
    on_bad_line: str = "error",
) -> RunTable:
    """Build a RunTable from line-delimited JSON records.

    ``lines`` is a path (gzip-transparent) or an iterable of (lineno, text).
    ``on_duplicate``: "error" rejects repeated (scene, action, micro-value)
    keys, "last" keeps the last record seen. ``on_bad_line``: "error" raises
    on the first malformed line, "skip" collects it in the ingest stats.
    """
    if on_duplicate not in ("error", "last"):
        raise IngestError(f"on_duplicate must be 'error' or 'last', got {on_duplicate!r}")
    if on_bad_line not in ("error", "skip"):
        raise IngestError(f"on_bad_line must be 'error' or 'skip', got {on_bad_line!r}")
    if isinstance(lines, (str, Path)):
        lines = iter_lines(lines)

    table = RunTable(manifest=manifest)
    for lineno, text in lines:
        try:
            try:
                doc = json.loads(text)
            except json.JSONDecodeError as exc:
                raise IngestError(f"line {lineno}: not valid JSON ({exc.msg})") from None
            record = _parse_record(doc, lineno)
            if record.run_id != manifest.run_id:
                raise IngestError(
                    f"line {lineno}: run_id {record.run_id!r} does not match "
                    f"manifest {manifest.run_id!r}"
                )
            if record.key in table.records and on_duplicate == "error":
                raise IngestError(
                    f"line {lineno}: duplicate key {record.key} under strict policy"
                )
        except IngestError as exc:
            if on_bad_line == "error":
                raise
            table.stats.rejected += 1
            table.stats.rejected_lines.append((lineno, str(exc)))
            continue
        table.records[record.key] = record
        table.stats.accepted += 1
    return table


def write_records(records: Iterable[JudgmentRecord], path: str | Path) -> None:
    """Write records as JSONL (gzip if the path ends in .gz)."""
    with open_text(path, "wt") as fh:
        for record in records:
            fh.write(json.dumps(record.to_dict(), sort_keys=True))
            fh.write("\n")


@dataclass(frozen=True)
class PairedJudgment:
    scene_id: str
    action_id: str
    micro_value: str
    polarity: int
    likert_pre: int
    likert_post: int


@dataclass(frozen=True)
class PairedTable:
    pre: RunManifest
    post: RunManifest
    samples: tuple[PairedJudgment, ...]
    dropped_count: int = 0

    def scene_ids(self) -> list[str]:
        return sorted({s.scene_id for s in self.samples})


def pair_runs(pre: RunTable, post: RunTable, policy: str = "lenient") -> PairedTable:
    """Inner-join two runs on (scene, action, micro-value).

    Polarity is an annotation of the action, so a mismatch between
    conditions is always an error. Under "strict", any key present in only
    one run is an error; under "lenient" such keys are dropped and counted.
    """
    if policy not in ("strict", "lenient"):
        raise PairingError(f"policy must be 'strict' or 'lenient', got {policy!r}")

    pre_keys = set(pre.records)
    post_keys = set(post.records)
    shared = pre_keys & post_keys
    unmatched = pre_keys ^ post_keys

    if unmatched and policy == "strict":
        example = sorted(unmatched)[:3]
        raise PairingError(
            f"{len(unmatched)} keys present in only one run "
            f"(strict pairing); examples: {example}"
        )
    if unmatched:
        logger.info("pair_runs dropped %d unmatched keys", len(unmatched))

    samples = []
    for key in sorted(shared):
        a, b = pre.records[key], post.records[key]
        if a.polarity != b.polarity:
            raise PairingError(
                f"polarity mismatch for key {key}: pre={a.polarity} post={b.polarity}"
            )
        samples.append(
            PairedJudgment(
                scene_id=key[0],
                action_id=key[1],
                micro_value=key[2],
                polarity=a.polarity,
                likert_pre=a.likert,
                likert_post=b.likert,
            )
        )
    return PairedTable(
        pre=pre.manifest,
        post=post.manifest,
        samples=tuple(samples),
        dropped_count=len(unmatched),
    )


def swap_conditions(paired: PairedTable) -> PairedTable:
    """Exchange pre and post judgments (used by invariance checks)."""
    return PairedTable(
        pre=paired.post,
        post=paired.pre,
        samples=tuple(
            PairedJudgment(
                scene_id=s.scene_id,
                action_id=s.action_id,
                micro_value=s.micro_value,
                polarity=s.polarity,
                likert_pre=s.likert_post,
                likert_post=s.likert_pre,
            )
            for s in paired.samples
        ),
        dropped_count=paired.dropped_count,
    )


def split_scenarios(
    scene_ids: Iterable[str],
    ratio: float,
    strata: Mapping[str, str] | None = None,
    seed: int = 0,
) -> tuple[set[str], set[str]]:
    """Stratified scenario-level split into (train, test).

    Whole scenes move together, preventing cross-scenario leakage. The
    global train count is round(ratio * N); per-stratum counts are the floor
    of the stratum's share, with the remaining slots handed to strata by
    largest fractional remainder (ties broken by a seeded shuffle).
    Deterministic given (inputs, seed).
    """
    scenes = sorted(set(scene_ids))
    if not scenes:
        raise SplitError("no scenes to split")
    if not 0.0 < ratio < 1.0:
        raise SplitError(f"ratio must lie in (0, 1), got {ratio!r}")
    if strata is None:
        strata = {s: "all" for s in scenes}
    missing = [s for s in scenes if s not in strata]
    if missing:
        raise SplitError(f"strata labels missing for scenes: {missing[:5]}")

    by_stratum: dict[str, list[str]] = {}
    for s in scenes:
        by_stratum.setdefault(str(strata[s]), []).append(s)
    labels = sorted(by_stratum)

    rng = np.random.default_rng(seed)
    target = int(round(ratio * len(scenes)))

    base: dict[str, int] = {}
    frac: dict[str, float] = {}
    for label in labels:
        share = ratio * len(by_stratum[label])
        base[label] = math.floor(share)
        frac[label] = share - base[label]

    leftover = target - sum(base.values())
    # seeded shuffle first so equal remainders get a random but stable order
    order = list(rng.permutation(len(labels)))
    ranked = sorted(range(len(labels)), key=lambda i: (-frac[labels[i]], order[i]))
    extra = {labels[i] for i in ranked[:leftover]}

    train: set[str] = set()
    for label in labels:
        members = by_stratum[label]
        n_train = base[label] + (1 if label in extra else 0)
        picked = rng.permutation(len(members))[:n_train]
        train.update(members[i] for i in picked)
    test = set(scenes) - train
    return train, test
