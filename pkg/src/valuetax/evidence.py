"""Likert judgments to per-sample value shifts.

The chain is: Likert response -> centered evidence level -> polarity-signed
evidence -> per-(sample, value) mean -> post-minus-pre shift. The resulting
shift matrix (samples x values) is the substrate every metric downstream
consumes.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .dataset import PairedTable
from .errors import EvidenceError
from .taxonomy import Taxonomy, micro_values_of

#: The five admissible evidence levels for Likert responses 1..5.
EVIDENCE_GRID = (-1.0, -0.5, 0.0, 0.5, 1.0)

#: How a (sample, value) score divides the summed evidence.
#:   observed         — by the number of micro-values actually observed
#:   full_denominator — by |U(v)| regardless of coverage
AGGREGATION_MODES = ("observed", "full_denominator")


def likert_to_evidence(likert: int) -> float:
    """Map a Likert response 1..5 onto the centered grid -1 .. 1."""
    if likert not in (1, 2, 3, 4, 5):
        raise EvidenceError(f"likert response out of range 1..5: {likert!r}")
    return (likert - 3) / 2.0


def evidence_to_likert(evidence: float) -> int:
    """Inverse of ``likert_to_evidence``; input must lie on the grid."""
    if evidence not in EVIDENCE_GRID:
        raise EvidenceError(f"evidence {evidence!r} not on the grid {EVIDENCE_GRID}")
    return int(round(evidence * 2)) + 3


def signed_evidence(polarity: int, likert: int) -> float:
    """Polarity-adjusted evidence: the action's support/violate sign times
    the centered Likert level."""
    if polarity not in (1, -1):
        raise EvidenceError(f"polarity must be +1 or -1, got {polarity!r}")
    # + 0.0 normalizes -0.0 so exports never contain a signed zero
    return polarity * likert_to_evidence(likert) + 0.0


def value_score(
    judgments: Iterable[tuple[str, int, int]],
    taxonomy: Taxonomy,
    value_id: str,
    aggregation: str = "observed",
) -> float | None:
    """Aggregate signed evidence for one sample and one value.

    ``judgments`` holds (micro_value, polarity, likert) triples, all of which
    must belong to the value's micro-value set. Returns None when nothing is
    observed.
    """
    members = set(micro_values_of(taxonomy, value_id))
    total = 0.0
    observed = 0
    for micro, polarity, likert in judgments:
        if micro not in members:
            raise EvidenceError(
                f"micro-value {micro!r} does not belong to value {value_id!r}"
            )
        total += signed_evidence(polarity, likert)
        observed += 1
    if observed == 0:
        return None
    denom = observed if aggregation == "observed" else len(members)
    return total / denom


@dataclass(frozen=True)
class ShiftMatrix:
    """Per-sample, per-value alignment-induced shifts.

    entries[i, j] is the post-minus-pre value score of sample i for value j,
    NaN where the sample observed no micro-value of that value. coverage
    counts the paired micro-values behind each entry.
    """

    sample_keys: tuple[tuple[str, str], ...]
    values: tuple[str, ...]
    entries: np.ndarray
    coverage: np.ndarray

    @property
    def n_samples(self) -> int:
        return len(self.sample_keys)

    def column(self, value_id: str) -> np.ndarray:
        try:
            j = self.values.index(value_id)
        except ValueError:
            raise EvidenceError(f"unknown value id: {value_id!r}") from None
        return self.entries[:, j]

    def present(self) -> np.ndarray:
        """Boolean mask of present entries."""
        return self.coverage >= 1


def build_shift_matrix(
    paired: PairedTable,
    taxonomy: Taxonomy,
    aggregation: str = "observed",
) -> ShiftMatrix:
    """Turn a paired table into the samples x values shift matrix.

    Rows are ordered by sample key, columns follow the taxonomy's value
    order, so serializations of the same data are byte-stable. An entry
    exists only where the sample observed at least one micro-value of the
    value in both conditions (pairing already guarantees both sides).
    """
    if aggregation not in AGGREGATION_MODES:
        raise EvidenceError(
            f"aggregation must be one of {AGGREGATION_MODES}, got {aggregation!r}"
        )

    sample_keys = tuple(sorted({(s.scene_id, s.action_id) for s in paired.samples}))
    row_of = {key: i for i, key in enumerate(sample_keys)}
    values = tuple(taxonomy.value_ids)
    col_of = {vid: j for j, vid in enumerate(values)}

    n, p = len(sample_keys), len(values)
    sums = np.zeros((n, p))
    counts = np.zeros((n, p), dtype=np.int64)

    for s in paired.samples:
        try:
            parent = taxonomy.parent_of(s.micro_value)
        except Exception:
            raise EvidenceError(
                f"record references micro-value {s.micro_value!r} "
                "absent from the taxonomy"
            ) from None
        i = row_of[(s.scene_id, s.action_id)]
        j = col_of[parent]
        delta = signed_evidence(s.polarity, s.likert_post) - signed_evidence(
            s.polarity, s.likert_pre
        )
        sums[i, j] += delta
        counts[i, j] += 1

    entries = np.full((n, p), np.nan)
    mask = counts > 0
    if aggregation == "observed":
        entries[mask] = sums[mask] / counts[mask]
    else:
        full = np.array([len(micro_values_of(taxonomy, vid)) for vid in values])
        entries[mask] = (sums / full[np.newaxis, :])[mask]
    # entries can carry -0.0 from summing; normalize for stable exports
    entries[mask] += 0.0

    return ShiftMatrix(
        sample_keys=sample_keys, values=values, entries=entries, coverage=counts
    )


def micro_shift_matrix(paired: PairedTable, taxonomy: Taxonomy) -> ShiftMatrix:
    """Shift matrix at micro-value granularity.

    Each micro-value's signed-evidence shift is its own column; sample keys
    and ordering conventions match ``build_shift_matrix``.
    """
    sample_keys = tuple(sorted({(s.scene_id, s.action_id) for s in paired.samples}))
    row_of = {key: i for i, key in enumerate(sample_keys)}
    columns = tuple(taxonomy.micro_value_ids)
    col_of = {mid: j for j, mid in enumerate(columns)}

    n, p = len(sample_keys), len(columns)
    entries = np.full((n, p), np.nan)
    counts = np.zeros((n, p), dtype=np.int64)

    for s in paired.samples:
        if s.micro_value not in col_of:
            raise EvidenceError(
                f"record references micro-value {s.micro_value!r} "
                "absent from the taxonomy"
            )
        i = row_of[(s.scene_id, s.action_id)]
        j = col_of[s.micro_value]
        entries[i, j] = signed_evidence(s.polarity, s.likert_post) - signed_evidence(
            s.polarity, s.likert_pre
        ) + 0.0
        counts[i, j] += 1

    return ShiftMatrix(
        sample_keys=sample_keys, values=columns, entries=entries, coverage=counts
    )


def write_shift_csv(sm: ShiftMatrix, path: str | Path) -> None:
    """Export entries as CSV (empty cell = absent) plus a sidecar coverage
    CSV of identical shape at ``<path stem>.coverage.csv``."""
    path = Path(path)
    header = ["scene_id", "action_id", *sm.values]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i, (scene, action) in enumerate(sm.sample_keys):
            row: list[str] = [scene, action]
            for j in range(len(sm.values)):
                x = sm.entries[i, j]
                row.append("" if np.isnan(x) else repr(float(x)))
            writer.writerow(row)

    sidecar = path.with_suffix(".coverage.csv")
    with open(sidecar, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i, (scene, action) in enumerate(sm.sample_keys):
            writer.writerow([scene, action, *(int(c) for c in sm.coverage[i])])
