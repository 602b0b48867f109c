"""The tax metric stack computed from a shift matrix.

Layer one summarizes marginal effects: the on-target gain and the
gain-normalized deviation of every value. Layer two captures structure: the
value-value coupling matrix (Spearman correlation of shift trajectories),
the per-value tax (row norm), the system-level tax (scaled Frobenius norm),
and how concentrated the tax profile is (Gini). Hub identification and the
hub/non-hub amplification comparison sit on top of tax profiles from
multiple configurations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import DegenerateResultError, MetricError
from .evidence import ShiftMatrix

FLAG_OK = "ok"
FLAG_CONSTANT = "constant_vector"
FLAG_LOW_SUPPORT = "low_support"

DEFAULT_MIN_SUPPORT = 30
DEFAULT_EPSILON_GAIN = 1e-6


def average_ranks(x: np.ndarray) -> np.ndarray:
    """Fractional (average-tie) ranks, 1-based.

    Tied observations share the mean of the ranks they occupy; rank sums are
    preserved, which is the standard estimator for rank correlations on the
    heavily tied grids Likert data produces.
    """
    x = np.asarray(x)
    _, inverse, counts = np.unique(x, return_inverse=True, return_counts=True)
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    mid = starts + (counts + 1) / 2.0
    return mid[inverse]


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Spearman rank correlation with average-tie ranks.

    Returns 0.0 when either input is constant (the caller decides whether
    that deserves a flag); raises on length mismatch or length < 2.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise MetricError(f"inputs must be equal-length 1-d sequences, got {x.shape} vs {y.shape}")
    if x.size < 2:
        raise MetricError("correlation needs at least 2 observations")

    a = average_ranks(x)
    b = average_ranks(y)
    am = a - a.mean()
    bm = b - b.mean()
    den = math.sqrt(float(np.dot(am, am)) * float(np.dot(bm, bm)))
    if den == 0.0:
        return 0.0
    r = float(np.dot(am, bm)) / den
    return min(1.0, max(-1.0, r))


def _present_column(sm: ShiftMatrix, value_id: str) -> np.ndarray:
    col = sm.column(value_id)
    return col[~np.isnan(col)]


def gain(sm: ShiftMatrix, target: str) -> float:
    """Realized on-target gain: mean shift of the target value over samples."""
    col = _present_column(sm, target)
    if col.size == 0:
        raise MetricError(f"target value {target!r} has no observed shifts")
    return float(col.mean())


def gain_normalized_deviation(
    sm: ShiftMatrix,
    target: str,
    epsilon_gain: float = DEFAULT_EPSILON_GAIN,
) -> np.ndarray:
    """Mean shift of every value divided by |gain of the target|.

    The target component is exactly sign(gain). Values with no observed
    shifts get NaN components. A gain within ``epsilon_gain`` of zero is not
    computable; raising beats emitting a huge unstable ratio.
    """
    g = gain(sm, target)
    if abs(g) <= epsilon_gain:
        raise DegenerateResultError(
            f"gain {g!r} within epsilon {epsilon_gain!r} of zero; "
            "gain-normalized deviation is not computable"
        )
    out = np.full(len(sm.values), np.nan)
    for j in range(len(sm.values)):
        col = sm.entries[:, j]
        col = col[~np.isnan(col)]
        if col.size:
            out[j] = float(col.mean()) / abs(g)
    return out


@dataclass(frozen=True)
class CouplingMatrix:
    """Symmetric value-value coupling with zero diagonal.

    entries[i, j] is the rank correlation (Spearman unless the caller swaps
    the estimator) between value i's and value j's shift trajectories over
    pairwise-complete samples. pair_support counts those samples; flags
    record why an entry was zeroed.
    """

    values: tuple[str, ...]
    entries: np.ndarray
    pair_support: np.ndarray
    flags: tuple[tuple[str, ...], ...]

    def row(self, value_id: str) -> np.ndarray:
        try:
            i = self.values.index(value_id)
        except ValueError:
            raise MetricError(f"unknown value id: {value_id!r}") from None
        return self.entries[i]

    def off_diagonal_pairs(self) -> list[tuple[str, str, float]]:
        """Unordered pairs (u, w, entry) with i < j."""
        out = []
        for i in range(len(self.values)):
            for j in range(i + 1, len(self.values)):
                out.append((self.values[i], self.values[j], float(self.entries[i, j])))
        return out

    def to_dict(self) -> dict:
        return {
            "values": list(self.values),
            "entries": [[float(x) for x in row] for row in self.entries],
            "support": [[int(x) for x in row] for row in self.pair_support],
            "flags": [list(row) for row in self.flags],
        }


def coupling_matrix(
    sm: ShiftMatrix,
    min_support: int = DEFAULT_MIN_SUPPORT,
    strict: bool = False,
    corr: Callable[[np.ndarray, np.ndarray], float] | None = None,
) -> CouplingMatrix:
    """Rank correlation of shift trajectories for every value pair.

    Each pair is computed over pairwise-complete samples (both entries
    present). Pairs under ``min_support`` — or with a constant trajectory —
    get entry 0 and a flag; under ``strict`` an under-supported pair raises
    instead. The diagonal is 0 by convention so that norm-based taxes start
    from an independence baseline. ``corr`` swaps the correlation estimator
    (default Spearman); the robustness checks pass Kendall here.
    """
    if corr is None:
        corr = spearman
    p = len(sm.values)
    if p < 2:
        raise MetricError("coupling needs at least 2 values")
    floor = max(int(min_support), 2)

    entries = np.zeros((p, p))
    support = np.zeros((p, p), dtype=np.int64)
    flags = [[FLAG_OK] * p for _ in range(p)]

    present = sm.present() & ~np.isnan(sm.entries)
    for i in range(p):
        support[i, i] = int(present[:, i].sum())
        for j in range(i + 1, p):
            both = present[:, i] & present[:, j]
            n = int(both.sum())
            support[i, j] = support[j, i] = n
            if n < floor:
                if strict:
                    raise DegenerateResultError(
                        f"pair ({sm.values[i]!r}, {sm.values[j]!r}) has support "
                        f"{n} < {floor} under strict coupling"
                    )
                flags[i][j] = flags[j][i] = FLAG_LOW_SUPPORT
                continue
            xi = sm.entries[both, i]
            xj = sm.entries[both, j]
            if np.all(xi == xi[0]) or np.all(xj == xj[0]):
                flags[i][j] = flags[j][i] = FLAG_CONSTANT
                continue
            r = corr(xi, xj)
            entries[i, j] = entries[j, i] = r

    return CouplingMatrix(
        values=tuple(sm.values),
        entries=entries,
        pair_support=support,
        flags=tuple(tuple(row) for row in flags),
    )


def value_tax(coupling: CouplingMatrix, value_id: str) -> float:
    """Per-value tax: Euclidean norm of the value's coupling row.

    Zero when the value's shifts are uncorrelated with every other value;
    bounded above by sqrt(|V| - 1).
    """
    return float(np.linalg.norm(coupling.row(value_id)))


def tax_profile(coupling: CouplingMatrix) -> np.ndarray:
    """value_tax for every value, in coupling order."""
    return np.linalg.norm(coupling.entries, axis=1)


def system_tax(coupling: CouplingMatrix) -> float:
    """System-level tax: Frobenius norm of the coupling matrix over
    sqrt(|V|). Zero iff every off-diagonal entry is zero."""
    p = len(coupling.values)
    return float(np.linalg.norm(coupling.entries) / math.sqrt(p))


def centralization(profile: Sequence[float]) -> float:
    """Gini coefficient of a non-negative tax profile.

    0 for a uniform (or all-zero, by convention) profile; approaches
    (n-1)/n as the tax concentrates on a single value.
    """
    x = np.asarray(profile, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise MetricError("profile must be a non-empty 1-d sequence")
    if np.any(x < 0):
        raise MetricError("profile components must be non-negative")
    total = math.fsum(x)
    if total == 0.0:
        return 0.0
    xs = np.sort(x)
    n = x.size
    # exactly-rounded sum: the symmetric weights cancel exactly on a
    # uniform profile, which must yield 0, not float dust
    numerator = math.fsum((2 * i - n - 1) * v for i, v in enumerate(xs, start=1))
    return numerator / (n * total)


def identify_hubs(
    profiles: Sequence[tuple[str, Mapping[str, float]]],
    quantile: float = 0.75,
    persistence: float = 0.75,
) -> list[str]:
    """Values whose tax persistently exceeds the per-profile quantile.

    A value qualifies when its tax is strictly above the quantile threshold
    of its own profile in at least ``persistence`` of the supplied
    configurations. Output sorted by value id.
    """
    if not profiles:
        raise MetricError("need at least one tax profile")
    if not 0.0 < quantile <= 1.0 or not 0.0 < persistence <= 1.0:
        raise MetricError("quantile and persistence must lie in (0, 1]")
    value_ids = sorted(profiles[0][1])
    for label, prof in profiles:
        if sorted(prof) != value_ids:
            raise MetricError(f"profile {label!r} covers a different value set")

    above = {v: 0 for v in value_ids}
    for _, prof in profiles:
        threshold = float(np.quantile([prof[v] for v in value_ids], quantile))
        for v in value_ids:
            if prof[v] > threshold:
                above[v] += 1
    needed = persistence * len(profiles)
    return sorted(v for v in value_ids if above[v] >= needed)


@dataclass(frozen=True)
class GroupStats:
    n: int
    mean: float
    median: float
    q1: float
    q3: float

    def to_dict(self) -> dict:
        return {"n": self.n, "mean": self.mean, "median": self.median, "q1": self.q1, "q3": self.q3}


def _group_stats(pool: np.ndarray) -> GroupStats:
    return GroupStats(
        n=int(pool.size),
        mean=float(pool.mean()),
        median=float(np.median(pool)),
        q1=float(np.quantile(pool, 0.25)),
        q3=float(np.quantile(pool, 0.75)),
    )


@dataclass(frozen=True)
class AmplificationReport:
    """Hub vs non-hub tax distributions pooled across configurations.

    The Mann-Whitney statistic is descriptive: at its null midpoint
    (n_hub * n_other / 2) the two groups are rank-indistinguishable.
    """

    hubs: tuple[str, ...]
    hub_stats: GroupStats
    non_hub_stats: GroupStats
    rank_sum_statistic: float
    rank_sum_null_mean: float

    def to_dict(self) -> dict:
        return {
            "hubs": list(self.hubs),
            "hub": self.hub_stats.to_dict(),
            "non_hub": self.non_hub_stats.to_dict(),
            "rank_sum_statistic": self.rank_sum_statistic,
            "rank_sum_null_mean": self.rank_sum_null_mean,
        }


def amplification_report(
    profiles: Sequence[tuple[str, Mapping[str, float]]],
    hubs: Sequence[str],
) -> AmplificationReport:
    """Compare pooled per-value tax between hub and non-hub values."""
    if not profiles:
        raise MetricError("need at least one tax profile")
    value_ids = sorted(profiles[0][1])
    hub_set = set(hubs)
    unknown = hub_set - set(value_ids)
    if unknown:
        raise MetricError(f"hubs not present in profiles: {sorted(unknown)}")
    if not hub_set:
        raise MetricError("hub set is empty")
    if hub_set == set(value_ids):
        raise MetricError("every value is classified as a hub; nothing to compare")

    hub_pool: list[float] = []
    other_pool: list[float] = []
    for _, prof in profiles:
        for v in value_ids:
            (hub_pool if v in hub_set else other_pool).append(float(prof[v]))

    hub_arr = np.asarray(hub_pool)
    other_arr = np.asarray(other_pool)
    pooled = np.concatenate([hub_arr, other_arr])
    ranks = average_ranks(pooled)
    n1 = hub_arr.size
    n2 = other_arr.size
    r1 = float(ranks[:n1].sum())
    u1 = r1 - n1 * (n1 + 1) / 2.0

    return AmplificationReport(
        hubs=tuple(sorted(hub_set)),
        hub_stats=_group_stats(hub_arr),
        non_hub_stats=_group_stats(other_arr),
        rank_sum_statistic=u1,
        rank_sum_null_mean=n1 * n2 / 2.0,
    )


@dataclass(frozen=True)
class TaxReport:
    """Everything the pipeline reports for one pre/post comparison."""

    target: str
    gain: float
    values: tuple[str, ...]
    gnd: tuple[float | None, ...] | None
    coupling: CouplingMatrix
    vat_profile: tuple[float, ...]
    nvat: float
    gini: float
    diagnostics: tuple[str, ...] = field(default_factory=tuple)

    def profile_map(self) -> dict[str, float]:
        return dict(zip(self.coupling.values, self.vat_profile))

    def to_dict(self) -> dict:
        return {
            "target": self.target,
            "gain": self.gain,
            "values": list(self.values),
            "gnd": None if self.gnd is None else list(self.gnd),
            "coupling": self.coupling.to_dict(),
            "vat_profile": list(self.vat_profile),
            "nvat": self.nvat,
            "gini": self.gini,
            "diagnostics": list(self.diagnostics),
        }


def compute_tax_report(
    sm: ShiftMatrix,
    target: str,
    min_support: int = DEFAULT_MIN_SUPPORT,
    epsilon_gain: float = DEFAULT_EPSILON_GAIN,
    exclude_target: bool = False,
    strict: bool = False,
) -> TaxReport:
    """Run the full metric stack over a shift matrix.

    ``exclude_target`` drops the target value from the coupling matrix (a
    sensitivity check); gain and deviation always cover the full value set.
    Under ``strict``, degenerate results (uncomputable deviation,
    under-supported pairs) raise instead of landing in diagnostics.
    """
    if target not in sm.values:
        raise MetricError(f"target {target!r} not among shift-matrix values {list(sm.values)}")

    diagnostics: list[str] = []
    g = gain(sm, target)

    gnd_values: tuple[float | None, ...] | None
    try:
        vector = gain_normalized_deviation(sm, target, epsilon_gain=epsilon_gain)
        gnd_values = tuple(None if np.isnan(x) else float(x) for x in vector)
        for vid, x in zip(sm.values, gnd_values):
            if x is None:
                diagnostics.append(f"value {vid!r} has no observed shifts; gnd component omitted")
    except DegenerateResultError as exc:
        if strict:
            raise
        gnd_values = None
        diagnostics.append(str(exc))

    coupling_input = sm
    if exclude_target:
        keep = [j for j, vid in enumerate(sm.values) if vid != target]
        coupling_input = ShiftMatrix(
            sample_keys=sm.sample_keys,
            values=tuple(vid for vid in sm.values if vid != target),
            entries=sm.entries[:, keep],
            coverage=sm.coverage[:, keep],
        )
        diagnostics.append(f"coupling computed with target {target!r} excluded")

    coupling = coupling_matrix(coupling_input, min_support=min_support, strict=strict)
    n_low = sum(row.count(FLAG_LOW_SUPPORT) for row in coupling.flags) // 2
    n_const = sum(row.count(FLAG_CONSTANT) for row in coupling.flags) // 2
    if n_low:
        diagnostics.append(f"{n_low} value pairs zeroed for low support (< {max(min_support, 2)})")
    if n_const:
        diagnostics.append(f"{n_const} value pairs zeroed for constant trajectories")

    profile = tax_profile(coupling)
    return TaxReport(
        target=target,
        gain=g,
        values=tuple(sm.values),
        gnd=gnd_values,
        coupling=coupling,
        vat_profile=tuple(float(x) for x in profile),
        nvat=system_tax(coupling),
        gini=centralization(profile),
        diagnostics=tuple(diagnostics),
    )
