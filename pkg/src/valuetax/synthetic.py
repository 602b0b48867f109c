"""Synthetic paired runs with planted coupling structure.

The generator draws a latent per-scene shift vector from a Gaussian with a
chosen correlation structure, quantizes it onto the evidence grid, and
emits Likert records for both conditions. Because the planted structure is
known, recovered metrics can be validated against it; the latent (pre
quantization) shifts are exposed for exactly that purpose.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .dataset import JudgmentRecord, RunManifest, RunTable
from .errors import GenerationError
from .evidence import EVIDENCE_GRID, evidence_to_likert
from .taxonomy import Taxonomy, default_taxonomy

# feasible pre levels per quantized shift: pre + shift must stay on the grid
_FEASIBLE_PRE = {
    shift: tuple(g for g in EVIDENCE_GRID if -1.0 <= g + shift <= 1.0)
    for shift in (-1.0, -0.5, 0.0, 0.5, 1.0)
}


@dataclass(frozen=True)
class PlantedSpec:
    """Ground truth for one synthetic pre/post pair.

    ``coupling`` lists (value_u, value_w, latent correlation); the implied
    correlation matrix must be positive definite. ``micro_jitter`` > 0 makes
    each micro-value an independent noisy copy of its parent value's latent
    shift instead of an exact copy.
    """

    taxonomy: Taxonomy = field(default_factory=default_taxonomy)
    n_scenes: int = 100
    coupling: tuple[tuple[str, str, float], ...] = ()
    target: str = "security"
    target_mean_shift: float = 0.0
    noise_scale: float = 1.0
    seed: int = 0
    micro_jitter: float = 0.0
    polarity_mode: str = "positive"

    def __post_init__(self) -> None:
        if self.n_scenes < 0:
            raise GenerationError(f"n_scenes must be >= 0, got {self.n_scenes!r}")
        if self.noise_scale <= 0:
            raise GenerationError(f"noise_scale must be > 0, got {self.noise_scale!r}")
        if self.target not in self.taxonomy.assignment:
            raise GenerationError(f"target {self.target!r} not in taxonomy")
        if self.polarity_mode not in ("positive", "mixed"):
            raise GenerationError(
                f"polarity_mode must be 'positive' or 'mixed', got {self.polarity_mode!r}"
            )
        if self.micro_jitter < 0:
            raise GenerationError(f"micro_jitter must be >= 0, got {self.micro_jitter!r}")
        seen: set[frozenset[str]] = set()
        for u, w, r in self.coupling:
            if u == w:
                raise GenerationError(f"coupling pair ({u!r}, {w!r}) must be distinct values")
            for vid in (u, w):
                if vid not in self.taxonomy.assignment:
                    raise GenerationError(f"coupling references unknown value {vid!r}")
            if not -1.0 < r < 1.0:
                raise GenerationError(f"latent correlation must lie in (-1, 1), got {r!r}")
            pair = frozenset((u, w))
            if pair in seen:
                raise GenerationError(f"duplicate coupling pair ({u!r}, {w!r})")
            seen.add(pair)


def latent_correlation(spec: PlantedSpec) -> np.ndarray:
    """The planted correlation matrix over taxonomy values."""
    ids = spec.taxonomy.value_ids
    index = {vid: i for i, vid in enumerate(ids)}
    corr = np.eye(len(ids))
    for u, w, r in spec.coupling:
        corr[index[u], index[w]] = corr[index[w], index[u]] = r
    return corr


def _cholesky_factor(spec: PlantedSpec) -> np.ndarray:
    corr = latent_correlation(spec)
    try:
        return np.linalg.cholesky(corr)
    except np.linalg.LinAlgError:
        raise GenerationError(
            "planted coupling implies a correlation matrix that is not "
            "positive definite; the planted spec is infeasible"
        ) from None


@dataclass(frozen=True)
class GeneratedPair:
    pre: RunTable
    post: RunTable
    scene_ids: tuple[str, ...]
    #: latent per-scene shift vectors (n_scenes x |values|), before quantization
    latent_shifts: np.ndarray


def generate(spec: PlantedSpec) -> GeneratedPair:
    """Emit deterministic pre/post run tables realizing the planted spec.

    Per scene: latent shift vector = target mean offset + noise_scale times
    a correlated standard normal draw; each component is quantized to the
    nearest half step clamped to [-1, 1]; the pre evidence level is drawn
    uniformly from the grid levels keeping pre + shift on the grid. Each
    scene derives its own generator from (seed, scene index), so generation
    is reproducible and parallelizable.
    """
    factor = _cholesky_factor(spec)
    values = spec.taxonomy.value_ids
    p = len(values)
    mean = np.zeros(p)
    mean[values.index(spec.target)] = spec.target_mean_shift

    direction = "reinforce" if spec.target_mean_shift >= 0 else "suppress"
    pre_manifest = RunManifest(
        run_id="synthetic-pre", model="synthetic", condition="pre"
    )
    post_manifest = RunManifest(
        run_id="synthetic-post",
        model="synthetic",
        condition="post",
        intervention="prompt_steer",
        target_value=spec.target,
        direction=direction,
    )
    pre = RunTable(manifest=pre_manifest)
    post = RunTable(manifest=post_manifest)

    scene_ids = tuple(f"s{i:05d}" for i in range(spec.n_scenes))
    latents = np.zeros((spec.n_scenes, p))

    for i, scene_id in enumerate(scene_ids):
        rng = np.random.default_rng([spec.seed, i])
        z = mean + spec.noise_scale * (factor @ rng.standard_normal(p))
        latents[i] = z
        for j, vid in enumerate(values):
            for micro in spec.taxonomy.assignment[vid]:
                raw = z[j]
                if spec.micro_jitter > 0.0:
                    raw = raw + spec.micro_jitter * rng.standard_normal()
                shift = float(np.clip(np.round(raw * 2.0) / 2.0, -1.0, 1.0))
                feasible = _FEASIBLE_PRE[shift]
                pre_ev = feasible[rng.integers(len(feasible))]
                post_ev = pre_ev + shift
                if spec.polarity_mode == "mixed":
                    polarity = 1 if rng.integers(2) == 0 else -1
                else:
                    polarity = 1
                for table, ev in ((pre, pre_ev), (post, post_ev)):
                    record = JudgmentRecord(
                        run_id=table.manifest.run_id,
                        scene_id=scene_id,
                        action_id="a0",
                        micro_value=micro,
                        polarity=polarity,
                        likert=evidence_to_likert(polarity * ev + 0.0),
                    )
                    table.records[record.key] = record
                    table.stats.accepted += 1

    return GeneratedPair(
        pre=pre, post=post, scene_ids=scene_ids, latent_shifts=latents
    )


def spec_from_dict(doc: Mapping, taxonomy: Taxonomy | None = None) -> PlantedSpec:
    """Build a PlantedSpec from a JSON document (CLI entry path)."""
    try:
        coupling = tuple(
            (str(u), str(w), float(r)) for u, w, r in doc.get("coupling", ())
        )
        return PlantedSpec(
            taxonomy=taxonomy if taxonomy is not None else default_taxonomy(),
            n_scenes=int(doc["n_scenes"]),
            coupling=coupling,
            target=str(doc["target"]),
            target_mean_shift=float(doc.get("target_mean_shift", 0.0)),
            noise_scale=float(doc.get("noise_scale", 1.0)),
            seed=int(doc["seed"]),
            micro_jitter=float(doc.get("micro_jitter", 0.0)),
            polarity_mode=str(doc.get("polarity_mode", "positive")),
        )
    except KeyError as exc:
        raise GenerationError(f"planted spec missing field {exc}") from None
    except (TypeError, ValueError) as exc:
        raise GenerationError(f"malformed planted spec: {exc}") from None


def population_spearman(latent_r: float) -> float:
    """Population Spearman correlation of a bivariate normal pair."""
    return (6.0 / np.pi) * np.arcsin(latent_r / 2.0)


def monte_carlo_spearman(
    latent_r: float, draws: int = 1_000_000, seed: int = 0
) -> float:
    """Monte Carlo estimate of the population Spearman correlation.

    Used as an independent cross-check of ``population_spearman``; draws a
    large bivariate normal sample and ranks it directly.
    """
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((draws, 2))
    x = g[:, 0]
    y = latent_r * g[:, 0] + np.sqrt(1.0 - latent_r**2) * g[:, 1]
    # all values distinct almost surely: plain argsort ranks suffice
    rx = np.empty(draws)
    rx[np.argsort(x)] = np.arange(draws)
    ry = np.empty(draws)
    ry[np.argsort(y)] = np.arange(draws)
    rx -= rx.mean()
    ry -= ry.mean()
    return float(np.dot(rx, ry) / np.sqrt(np.dot(rx, rx) * np.dot(ry, ry)))
