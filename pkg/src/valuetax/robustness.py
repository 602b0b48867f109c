"""Stability checks for the tax metrics.

Three orthogonal axes: scene-level bootstrap stability of the system tax,
agreement between Spearman-based and Kendall-based tax rankings, and
consistency between micro-value-level and value-level tax profiles.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataset import PairedTable
from .errors import MetricError, RobustnessError
from .evidence import ShiftMatrix, build_shift_matrix, micro_shift_matrix
from .metrics import (
    DEFAULT_MIN_SUPPORT,
    coupling_matrix,
    spearman,
    system_tax,
    tax_profile,
)
from .taxonomy import Taxonomy


def kendall(x: Sequence[float], y: Sequence[float]) -> float:
    """Kendall's tau-b (tie-corrected), 0.0 on constant input.

    Pair classification runs vectorized in row chunks so large trajectories
    stay inside a bounded memory envelope.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise MetricError(f"inputs must be equal-length 1-d sequences, got {x.shape} vs {y.shape}")
    n = x.size
    if n < 2:
        raise MetricError("correlation needs at least 2 observations")

    # sum of sign(dx)*sign(dy) over the full n x n grid; every unordered
    # pair appears twice, the diagonal contributes zero
    s = 0.0
    chunk = 512
    for start in range(0, n, chunk):
        dx = np.sign(x[start : start + chunk, None] - x[None, :])
        dy = np.sign(y[start : start + chunk, None] - y[None, :])
        s += float(np.sum(dx * dy))
    s /= 2.0

    def tie_pairs(v: np.ndarray) -> float:
        _, counts = np.unique(v, return_counts=True)
        return float(np.sum(counts * (counts - 1) / 2))

    n0 = n * (n - 1) / 2.0
    den = math.sqrt((n0 - tie_pairs(x)) * (n0 - tie_pairs(y)))
    if den == 0.0:
        return 0.0
    return min(1.0, max(-1.0, s / den))


@dataclass(frozen=True)
class BootstrapResult:
    replicate_values: tuple[float, ...]
    mean: float
    std: float
    fraction: float
    replicates: int
    seed: int
    mode: str

    def to_dict(self) -> dict:
        return {
            "replicate_values": list(self.replicate_values),
            "mean": self.mean,
            "std": self.std,
            "fraction": self.fraction,
            "replicates": self.replicates,
            "seed": self.seed,
            "mode": self.mode,
        }


def bootstrap_nvat(
    paired: PairedTable,
    taxonomy: Taxonomy,
    fraction: float = 0.8,
    replicates: int = 200,
    seed: int = 0,
    min_support: int = DEFAULT_MIN_SUPPORT,
    mode: str = "subsample",
    aggregation: str = "observed",
    jobs: int = 1,
) -> BootstrapResult:
    """Scene-level bootstrap of the system tax.

    Every replicate draws ceil(fraction * #scenes) scenes — all samples of a
    scene move together — and recomputes the system tax on the restricted
    shift matrix. "subsample" draws without replacement (the default
    procedure); "resample" is the classical with-replacement bootstrap,
    where a scene drawn twice contributes its samples twice. Each replicate
    seeds its own generator from (seed, replicate index), so running with
    ``jobs`` > 1 returns exactly the serial result.
    """
    if not 0.0 < fraction <= 1.0:
        raise RobustnessError(f"fraction must lie in (0, 1], got {fraction!r}")
    if replicates < 1:
        raise RobustnessError(f"replicates must be >= 1, got {replicates!r}")
    if mode not in ("subsample", "resample"):
        raise RobustnessError(f"mode must be 'subsample' or 'resample', got {mode!r}")
    if jobs < 1:
        raise RobustnessError(f"jobs must be >= 1, got {jobs!r}")

    sm = build_shift_matrix(paired, taxonomy, aggregation=aggregation)
    scenes = sorted({scene for scene, _ in sm.sample_keys})
    if len(scenes) < 2:
        raise RobustnessError(f"need at least 2 distinct scenes, got {len(scenes)}")

    rows_of: dict[str, list[int]] = {scene: [] for scene in scenes}
    for i, (scene, _) in enumerate(sm.sample_keys):
        rows_of[scene].append(i)
    n_pick = math.ceil(fraction * len(scenes))

    def one_replicate(rep: int) -> float:
        rng = np.random.default_rng([seed, rep])
        picked = rng.choice(len(scenes), size=n_pick, replace=(mode == "resample"))
        rows = np.sort(
            np.concatenate([rows_of[scenes[i]] for i in picked]).astype(np.int64)
        )
        sub = ShiftMatrix(
            sample_keys=tuple(sm.sample_keys[i] for i in rows),
            values=sm.values,
            entries=sm.entries[rows],
            coverage=sm.coverage[rows],
        )
        return system_tax(coupling_matrix(sub, min_support=min_support))

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            values = list(pool.map(one_replicate, range(replicates)))
    else:
        values = [one_replicate(rep) for rep in range(replicates)]

    arr = np.asarray(values)
    # center before the spread so identical replicates give exactly 0
    return BootstrapResult(
        replicate_values=tuple(float(v) for v in values),
        mean=float(arr.mean()),
        std=float(np.std(arr - arr[0])),
        fraction=fraction,
        replicates=replicates,
        seed=seed,
        mode=mode,
    )


@dataclass(frozen=True)
class AgreementResult:
    values: tuple[str, ...]
    spearman_based_profile: tuple[float, ...]
    kendall_based_profile: tuple[float, ...]
    rank_agreement: float
    degenerate: bool
    comparison: str

    def to_dict(self) -> dict:
        return {
            "values": list(self.values),
            "spearman_based_profile": list(self.spearman_based_profile),
            "kendall_based_profile": list(self.kendall_based_profile),
            "rank_agreement": self.rank_agreement,
            "degenerate": self.degenerate,
            "comparison": self.comparison,
        }


def rank_agreement(
    sm: ShiftMatrix,
    min_support: int = DEFAULT_MIN_SUPPORT,
    comparison: str = "spearman",
) -> AgreementResult:
    """Agreement between tax profiles under the two rank correlations.

    Builds the coupling matrix twice (Spearman vs Kendall entries), derives
    both tax profiles, and correlates them. Identical non-zero profiles are
    perfect agreement (1.0) even when constant — a fully comonotone shift
    matrix lands there legitimately. All-zero profiles, or a constant
    profile on one side only, make agreement undefined: reported as 0 with
    the degenerate flag set.
    """
    if comparison not in ("spearman", "kendall"):
        raise RobustnessError(f"comparison must be 'spearman' or 'kendall', got {comparison!r}")
    prof_s = tax_profile(coupling_matrix(sm, min_support=min_support))
    prof_k = tax_profile(coupling_matrix(sm, min_support=min_support, corr=kendall))

    all_zero = bool(np.all(prof_s == 0.0) and np.all(prof_k == 0.0))
    degenerate = False
    if np.array_equal(prof_s, prof_k) and not all_zero:
        agreement = 1.0
    elif all_zero or np.all(prof_s == prof_s[0]) or np.all(prof_k == prof_k[0]):
        agreement = 0.0
        degenerate = True
    else:
        compare = spearman if comparison == "spearman" else kendall
        agreement = compare(prof_s, prof_k)

    return AgreementResult(
        values=tuple(sm.values),
        spearman_based_profile=tuple(float(v) for v in prof_s),
        kendall_based_profile=tuple(float(v) for v in prof_k),
        rank_agreement=float(agreement),
        degenerate=degenerate,
        comparison=comparison,
    )


@dataclass(frozen=True)
class CrossGranularityResult:
    micro_values: tuple[str, ...]
    micro_profile: tuple[float, ...]
    values: tuple[str, ...]
    aggregated_profile: tuple[float, ...]
    ten_d_profile: tuple[float, ...]
    rank_correlation: float
    degenerate: bool
    aggregate: str
    diagnostics: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "micro_values": list(self.micro_values),
            "micro_profile": list(self.micro_profile),
            "values": list(self.values),
            "aggregated_profile": list(self.aggregated_profile),
            "ten_d_profile": list(self.ten_d_profile),
            "rank_correlation": self.rank_correlation,
            "degenerate": self.degenerate,
            "aggregate": self.aggregate,
            "diagnostics": list(self.diagnostics),
        }


def cross_granularity(
    paired: PairedTable,
    taxonomy: Taxonomy,
    min_support: int = DEFAULT_MIN_SUPPORT,
    aggregate: str = "mean",
) -> CrossGranularityResult:
    """Micro-level tax aggregated to parent values vs the value-level tax.

    Each observed micro-value's signed-evidence shift is its own trajectory;
    the micro coupling matrix reuses the zero-diagonal, pairwise-complete,
    tie-averaged machinery. Per parent value the constituent micro taxes are
    combined by ``aggregate`` ("mean" keeps values with many micro-values
    from being mechanically inflated; "sum" is available). Values with no
    observed micro-values are excluded with a diagnostic.
    """
    if aggregate not in ("mean", "sum"):
        raise RobustnessError(f"aggregate must be 'mean' or 'sum', got {aggregate!r}")

    micro_sm = micro_shift_matrix(paired, taxonomy)
    observed = [
        j for j in range(len(micro_sm.values)) if (micro_sm.coverage[:, j] >= 1).any()
    ]
    if len(observed) < 2:
        raise RobustnessError("need at least 2 observed micro-values")
    micro_sm = ShiftMatrix(
        sample_keys=micro_sm.sample_keys,
        values=tuple(micro_sm.values[j] for j in observed),
        entries=micro_sm.entries[:, observed],
        coverage=micro_sm.coverage[:, observed],
    )

    micro_profile = tax_profile(coupling_matrix(micro_sm, min_support=min_support))
    micro_tax = dict(zip(micro_sm.values, micro_profile))

    diagnostics: list[str] = []
    included: list[str] = []
    aggregated: list[float] = []
    for vid in taxonomy.value_ids:
        members = [m for m in taxonomy.assignment[vid] if m in micro_tax]
        if not members:
            diagnostics.append(f"value {vid!r} has no observed micro-values; excluded")
            continue
        total = sum(micro_tax[m] for m in members)
        included.append(vid)
        aggregated.append(total / len(members) if aggregate == "mean" else total)

    if len(included) < 2:
        raise RobustnessError("fewer than 2 values have observed micro-values")

    ten_sm = build_shift_matrix(paired, taxonomy)
    ten_profile_full = tax_profile(coupling_matrix(ten_sm, min_support=min_support))
    ten_tax = dict(zip(ten_sm.values, ten_profile_full))
    ten_profile = [ten_tax[vid] for vid in included]

    agg_arr = np.asarray(aggregated)
    ten_arr = np.asarray(ten_profile)
    degenerate = bool(np.all(agg_arr == agg_arr[0]) or np.all(ten_arr == ten_arr[0]))
    correlation = 0.0 if degenerate else spearman(agg_arr, ten_arr)

    return CrossGranularityResult(
        micro_values=tuple(micro_sm.values),
        micro_profile=tuple(float(v) for v in micro_profile),
        values=tuple(included),
        aggregated_profile=tuple(float(v) for v in aggregated),
        ten_d_profile=tuple(float(v) for v in ten_profile),
        rank_correlation=float(correlation),
        degenerate=degenerate,
        aggregate=aggregate,
        diagnostics=tuple(diagnostics),
    )
