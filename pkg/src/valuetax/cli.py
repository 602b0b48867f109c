"""Command-line surface.

Exit codes: 0 success, 2 input/validation error, 3 upstream-service error,
4 degenerate result in strict mode. Every command writes a manifest of
input hashes, parameters, and seeds next to its outputs; given identical
inputs and seeds, outputs are byte-identical across runs.
"""

from __future__ import annotations

import csv
import functools
import json
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__
from .dataset import ingest_run, manifest_from_dict, pair_runs, write_records
from .elicitation import (
    EndpointConfig,
    SteeringSpec,
    read_probe_items,
    run_elicitation,
)
from .errors import (
    ConfigError,
    DegenerateResultError,
    ElicitationError,
    MetricError,
    ValueTaxError,
)
from .evidence import build_shift_matrix, write_shift_csv
from .figures import (
    FIGURE_KINDS,
    amplification_bundle,
    chord_bundle,
    circumplex_bundle,
    heatmap_bundle,
    pareto_bundle,
    radar_bundle,
)
from .metrics import CouplingMatrix, TaxReport, compute_tax_report
from .mockjudge import MockJudge, create_app
from .robustness import bootstrap_nvat, cross_granularity, rank_agreement
from .synthetic import generate, spec_from_dict
from .taxonomy import default_taxonomy, load_taxonomy
from .ioutils import dump_json, load_json, sha256_file

EXIT_INPUT = 2
EXIT_UPSTREAM = 3
EXIT_DEGENERATE = 4


def _exit_code(exc: ValueTaxError) -> int:
    if isinstance(exc, ElicitationError):
        return EXIT_UPSTREAM
    if isinstance(exc, DegenerateResultError):
        return EXIT_DEGENERATE
    return EXIT_INPUT


def handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ValueTaxError as exc:
            code = _exit_code(exc)
            message = str(exc).replace("\n", " ")
            click.echo(f"error module={exc.module} exit={code} msg={message}", err=True)
            sys.exit(code)

    return wrapper


def _load_config(path: str) -> dict:
    try:
        doc = load_json(path)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return doc


def _require(cfg: dict, key: str) -> object:
    if key not in cfg:
        raise ConfigError(f"config is missing required key {key!r}")
    return cfg[key]


def _load_taxonomy(cfg: dict):
    path = cfg.get("taxonomy")
    return load_taxonomy(path) if path else default_taxonomy()


def _resolve_input(path_str: str, what: str) -> Path:
    path = Path(path_str)
    if not path.exists():
        raise ConfigError(f"{what} file not found: {path}")
    return path


def _read_run(cfg: dict, side: str):
    entry = _require(cfg, side)
    if not isinstance(entry, dict) or "manifest" not in entry or "records" not in entry:
        raise ConfigError(f"config key {side!r} needs 'manifest' and 'records' paths")
    manifest_path = _resolve_input(entry["manifest"], f"{side} manifest")
    records_path = _resolve_input(entry["records"], f"{side} records")
    manifest = manifest_from_dict(load_json(manifest_path))
    table = ingest_run(manifest, records_path)
    return table, {f"{side}_manifest": str(manifest_path), f"{side}_records": str(records_path)}


def _write_manifest(out: Path, command: str, inputs: dict, params: dict) -> None:
    dump_json(
        {
            "command": command,
            "version": __version__,
            "inputs": {name: sha256_file(p) for name, p in sorted(inputs.items())},
            "params": params,
        },
        out / "manifest.json",
    )


def write_coupling_csv(coupling: CouplingMatrix, path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["value", *coupling.values])
        for i, vid in enumerate(coupling.values):
            writer.writerow([vid, *(repr(float(x)) for x in coupling.entries[i])])


def report_from_dict(doc: dict) -> TaxReport:
    """Rebuild a TaxReport from its JSON export (figures command input)."""
    try:
        coupling = CouplingMatrix(
            values=tuple(doc["coupling"]["values"]),
            entries=np.asarray(doc["coupling"]["entries"], dtype=float),
            pair_support=np.asarray(doc["coupling"]["support"], dtype=np.int64),
            flags=tuple(tuple(row) for row in doc["coupling"]["flags"]),
        )
        gnd = doc["gnd"]
        return TaxReport(
            target=doc["target"],
            gain=float(doc["gain"]),
            values=tuple(doc["values"]),
            gnd=None if gnd is None else tuple(gnd),
            coupling=coupling,
            vat_profile=tuple(float(x) for x in doc["vat_profile"]),
            nvat=float(doc["nvat"]),
            gini=float(doc["gini"]),
            diagnostics=tuple(doc.get("diagnostics", ())),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed report document: {exc}") from None


@click.group()
@click.version_option(version=__version__)
def main():
    """Quantify how an alignment intervention reshapes a value system."""


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------

@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(), help="Pipeline config JSON.")
@click.option("--target", default=None, help="Override the target value id.")
@click.option("--out", "out_dir", default=None, type=click.Path(), help="Override the output directory.")
@click.option("--pairing", default=None, type=click.Choice(["strict", "lenient"]))
@click.option("--min-support", default=None, type=int)
@click.option("--epsilon-gain", default=None, type=float)
@click.option("--aggregation", default=None, type=click.Choice(["observed", "full_denominator"]))
@click.option("--exclude-target", is_flag=True, default=False, help="Drop the target from the coupling matrix.")
@click.option("--strict", is_flag=True, default=False, help="Strict pairing; degenerate results become errors.")
@handle_errors
def pipeline(config_path, target, out_dir, pairing, min_support, epsilon_gain, aggregation, exclude_target, strict):
    """Ingest paired runs and write the full tax report."""
    cfg = _load_config(config_path)
    target = target or str(_require(cfg, "target"))
    out = Path(out_dir or _require(cfg, "out"))
    pairing = pairing or cfg.get("pairing", "lenient")
    if strict:
        pairing = "strict"
    min_support = min_support if min_support is not None else int(cfg.get("min_support", 30))
    epsilon_gain = epsilon_gain if epsilon_gain is not None else float(cfg.get("epsilon_gain", 1e-6))
    aggregation = aggregation or cfg.get("aggregation", "observed")
    exclude_target = exclude_target or bool(cfg.get("exclude_target", False))

    taxonomy = _load_taxonomy(cfg)
    pre, pre_inputs = _read_run(cfg, "pre")
    post, post_inputs = _read_run(cfg, "post")
    paired = pair_runs(pre, post, policy=pairing)
    sm = build_shift_matrix(paired, taxonomy, aggregation=aggregation)
    report = compute_tax_report(
        sm,
        target,
        min_support=min_support,
        epsilon_gain=epsilon_gain,
        exclude_target=exclude_target,
        strict=strict,
    )

    out.mkdir(parents=True, exist_ok=True)
    dump_json(report.to_dict(), out / "report.json")
    write_shift_csv(sm, out / "shifts.csv")
    write_coupling_csv(report.coupling, out / "coupling.csv")
    inputs = {**pre_inputs, **post_inputs, "config": config_path}
    if cfg.get("taxonomy"):
        inputs["taxonomy"] = cfg["taxonomy"]
    _write_manifest(
        out,
        "pipeline",
        inputs,
        {
            "target": target,
            "pairing": pairing,
            "min_support": min_support,
            "epsilon_gain": epsilon_gain,
            "aggregation": aggregation,
            "exclude_target": exclude_target,
            "strict": strict,
            "dropped_pairs": paired.dropped_count,
        },
    )
    click.echo(
        f"pipeline ok: gain={report.gain:.4f} nvat={report.nvat:.4f} "
        f"gini={report.gini:.4f} samples={sm.n_samples} -> {out}"
    )


# ---------------------------------------------------------------------------
# figures
# ---------------------------------------------------------------------------

@main.command()
@click.option("--report", "report_paths", multiple=True, required=True, type=click.Path(), help="Report JSON (repeatable).")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--kinds", default=",".join(FIGURE_KINDS), show_default=True, help="Comma-separated figure kinds.")
@click.option("--svg", "render_svg", is_flag=True, default=False, help="Render SVGs next to the data files.")
@click.option("--top-edges", default=10, show_default=True, type=int)
@click.option("--taxonomy", "taxonomy_path", default=None, type=click.Path(), help="Taxonomy for circumplex angles.")
@click.option("--quantile", default=0.75, show_default=True, type=float)
@click.option("--persistence", default=0.75, show_default=True, type=float)
@handle_errors
def figures(report_paths, out_dir, kinds, render_svg, top_edges, taxonomy_path, quantile, persistence):
    """Emit figure data (and optionally SVGs) from tax reports."""
    kinds = [k.strip() for k in kinds.split(",") if k.strip()]
    unknown = set(kinds) - set(FIGURE_KINDS)
    if unknown:
        raise ConfigError(f"unknown figure kinds: {sorted(unknown)}; choose from {FIGURE_KINDS}")

    reports = []
    for path_str in report_paths:
        path = _resolve_input(path_str, "report")
        reports.append((path.stem if path.stem != "report" else path.parent.name, report_from_dict(load_json(path))))
    labels = [label for label, _ in reports]
    if len(set(labels)) != len(labels):
        reports = [(f"{label}#{i}", r) for i, (label, r) in enumerate(reports)]
    taxonomy = load_taxonomy(taxonomy_path) if taxonomy_path else default_taxonomy()

    primary = reports[0][1]
    stability = None
    if len(reports) >= 2:
        per_value: dict[str, list[float]] = {}
        for _, r in reports:
            for vid, vat in r.profile_map().items():
                per_value.setdefault(vid, []).append(vat)
        stability = {vid: float(np.std(vals)) for vid, vals in per_value.items() if len(vals) >= 2}

    out = Path(out_dir) / "figures"
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for kind in kinds:
        if kind == "heatmap":
            bundle = heatmap_bundle(primary, render_svg=render_svg)
        elif kind == "radar":
            bundle = radar_bundle(primary, render_svg=render_svg)
        elif kind == "chord":
            bundle = chord_bundle(primary, top_edges=top_edges, render_svg=render_svg)
        elif kind == "circumplex":
            bundle = circumplex_bundle(primary, taxonomy, stability=stability, render_svg=render_svg)
        elif kind == "pareto":
            bundle = pareto_bundle(reports, render_svg=render_svg)
        else:
            try:
                bundle = amplification_bundle(reports, quantile=quantile, persistence=persistence, render_svg=render_svg)
            except MetricError as exc:
                click.echo(f"amplification degenerate: {exc}", err=True)
                dump_json({"degenerate": True, "reason": str(exc)}, out / "amplification.json")
                written.append("amplification.json")
                continue
        dump_json(bundle.data, out / f"{kind}.json")
        written.append(f"{kind}.json")
        if bundle.svg is not None:
            (out / f"{kind}.svg").write_text(bundle.svg, encoding="utf-8")
            written.append(f"{kind}.svg")
    _write_manifest(
        out,
        "figures",
        {f"report_{i}": p for i, p in enumerate(report_paths)},
        {"kinds": kinds, "svg": render_svg, "top_edges": top_edges,
         "quantile": quantile, "persistence": persistence},
    )
    click.echo(f"figures ok: {', '.join(written)} -> {out}")


# ---------------------------------------------------------------------------
# robustness
# ---------------------------------------------------------------------------

@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--out", "out_dir", default=None, type=click.Path())
@click.option("--fraction", default=None, type=float)
@click.option("--replicates", default=None, type=int)
@click.option("--seed", default=None, type=int)
@click.option("--mode", default=None, type=click.Choice(["subsample", "resample"]))
@click.option("--jobs", default=1, show_default=True, type=int, help="Parallel bootstrap replicates (same result as serial).")
@click.option("--dump-replicates", is_flag=True, default=False, help="Also write replicate values as CSV.")
@handle_errors
def robustness(config_path, out_dir, fraction, replicates, seed, mode, jobs, dump_replicates):
    """Bootstrap stability, rank agreement, and cross-granularity checks."""
    cfg = _load_config(config_path)
    out = Path(out_dir or _require(cfg, "out"))
    fraction = fraction if fraction is not None else float(cfg.get("fraction", 0.8))
    replicates = replicates if replicates is not None else int(cfg.get("replicates", 200))
    if seed is None:
        if "seed" not in cfg:
            raise ConfigError("a seed is required, via --seed or the config (no wall-clock default)")
        seed = int(cfg["seed"])
    mode = mode or cfg.get("mode", "subsample")
    min_support = int(cfg.get("min_support", 30))
    comparison = cfg.get("comparison", "spearman")
    aggregate = cfg.get("aggregate", "mean")
    pairing = cfg.get("pairing", "lenient")

    taxonomy = _load_taxonomy(cfg)
    pre, pre_inputs = _read_run(cfg, "pre")
    post, post_inputs = _read_run(cfg, "post")
    paired = pair_runs(pre, post, policy=pairing)

    boot = bootstrap_nvat(
        paired, taxonomy, fraction=fraction, replicates=replicates,
        seed=seed, min_support=min_support, mode=mode, jobs=jobs,
    )
    sm = build_shift_matrix(paired, taxonomy)
    agreement = rank_agreement(sm, min_support=min_support, comparison=comparison)
    cross = cross_granularity(paired, taxonomy, min_support=min_support, aggregate=aggregate)

    out.mkdir(parents=True, exist_ok=True)
    dump_json(
        {
            "bootstrap": boot.to_dict(),
            "rank_agreement": agreement.to_dict(),
            "cross_granularity": cross.to_dict(),
        },
        out / "robustness.json",
    )
    if dump_replicates:
        with open(out / "replicates.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["replicate", "nvat"])
            for i, v in enumerate(boot.replicate_values):
                writer.writerow([i, repr(v)])
    _write_manifest(
        out,
        "robustness",
        {**pre_inputs, **post_inputs, "config": config_path},
        {
            "fraction": fraction, "replicates": replicates, "seed": seed,
            "mode": mode, "min_support": min_support, "comparison": comparison,
            "aggregate": aggregate, "pairing": pairing,
        },
    )
    click.echo(
        f"robustness ok: nvat={boot.mean:.4f}±{boot.std:.4f} "
        f"rank_agreement={agreement.rank_agreement:.4f} "
        f"cross_granularity={cross.rank_correlation:.4f} -> {out}"
    )


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

@main.command()
@click.option("--spec", "spec_path", required=True, type=click.Path(), help="Planted spec JSON.")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--seed", default=None, type=int, help="Override the spec seed.")
@click.option("--taxonomy", "taxonomy_path", default=None, type=click.Path())
@handle_errors
def synth(spec_path, out_dir, seed, taxonomy_path):
    """Generate a synthetic pre/post run pair with planted structure."""
    doc = _load_config(spec_path)
    if seed is not None:
        doc = {**doc, "seed": seed}
    taxonomy = load_taxonomy(taxonomy_path) if taxonomy_path else (
        load_taxonomy(doc["taxonomy"]) if doc.get("taxonomy") else default_taxonomy()
    )
    spec = spec_from_dict(doc, taxonomy=taxonomy)
    result = generate(spec)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_records(result.pre.records.values(), out / "pre.jsonl")
    write_records(result.post.records.values(), out / "post.jsonl")
    dump_json(result.pre.manifest.to_dict(), out / "pre.manifest.json")
    dump_json(result.post.manifest.to_dict(), out / "post.manifest.json")
    _write_manifest(
        out,
        "synth",
        {"spec": spec_path},
        {"seed": spec.seed, "n_scenes": spec.n_scenes, "target": spec.target},
    )
    click.echo(
        f"synth ok: {len(result.pre)} pre and {len(result.post)} post records -> {out}"
    )


# ---------------------------------------------------------------------------
# elicit
# ---------------------------------------------------------------------------

def _endpoint_from_config(cfg: dict) -> tuple[EndpointConfig, MockJudge | None]:
    entry = _require(cfg, "endpoint")
    if not isinstance(entry, dict):
        raise ConfigError("config key 'endpoint' must be an object")
    try:
        base_url = str(entry["base_url"])
        model_name = str(entry["model_name"])
    except KeyError as exc:
        raise ConfigError(f"endpoint config missing {exc}") from None
    token = None
    if entry.get("auth_env"):
        token = os.environ.get(str(entry["auth_env"]))
        if token is None:
            raise ConfigError(f"environment variable {entry['auth_env']!r} is not set")
    endpoint = EndpointConfig(
        base_url=base_url,
        model_name=model_name,
        auth_token=token,
        timeout=float(entry.get("timeout", 30.0)),
        max_concurrent=int(entry.get("max_concurrent", 4)),
        max_retries=int(entry.get("max_retries", 3)),
        temperature=float(entry.get("temperature", 0.0)),
        retry_backoff=float(entry.get("retry_backoff", 0.5)),
    )
    judge = None
    if base_url.startswith("mock://"):
        mock_cfg = cfg.get("mock", {})
        judge = MockJudge(
            fixed_reply=mock_cfg.get("fixed_reply"),
            fail_first=int(mock_cfg.get("fail_first", 0)),
            garbage_marker=mock_cfg.get("garbage_marker"),
        )
    return endpoint, judge


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--out", "out_dir", default=None, type=click.Path())
@handle_errors
def elicit(config_path, out_dir):
    """Collect judgments from a chat-completion endpoint (or the bundled
    mock, via a mock:// base_url)."""
    cfg = _load_config(config_path)
    out = Path(out_dir or _require(cfg, "out"))
    dataset_path = _resolve_input(str(_require(cfg, "dataset")), "probe dataset")
    manifest = manifest_from_dict(_require(cfg, "manifest"))
    steering = None
    if cfg.get("steering"):
        s = cfg["steering"]
        try:
            steering = SteeringSpec(
                target_value=str(s["target_value"]),
                direction=str(s["direction"]),
                shots=int(s["shots"]),
                exemplars=tuple(
                    (str(e["scene_text"]), str(e["action_text"]), int(e["judgment"]))
                    for e in s.get("exemplars", ())
                ),
            )
        except KeyError as exc:
            raise ConfigError(f"steering config missing {exc}") from None

    endpoint, judge = _endpoint_from_config(cfg)
    items = read_probe_items(dataset_path)
    out.mkdir(parents=True, exist_ok=True)
    checkpoint = cfg.get("checkpoint")
    result = run_elicitation(
        items,
        endpoint,
        manifest,
        steering=steering,
        checkpoint_path=Path(checkpoint) if checkpoint else None,
        transport=judge.transport() if judge is not None else None,
    )

    write_records(result.table.records.values(), out / "run.jsonl")
    dump_json(manifest.to_dict(), out / "run.manifest.json")
    with open(out / "prompts.jsonl", "w", encoding="utf-8") as fh:
        for (scene_id, action_id, micro_value), prompt in result.prompts:
            fh.write(json.dumps(
                {"scene_id": scene_id, "action_id": action_id,
                 "micro_value": micro_value, "prompt": prompt},
                sort_keys=True,
            ) + "\n")
    dump_json(
        {
            "requested": result.stats.requested,
            "completed": result.stats.completed,
            "resumed_from_checkpoint": result.stats.resumed_from_checkpoint,
            "parse_failures": result.stats.parse_failures,
            "item_failures": result.stats.item_failures,
            "retries": result.stats.retries,
        },
        out / "stats.json",
    )
    _write_manifest(
        out,
        "elicit",
        {"config": config_path, "dataset": str(dataset_path)},
        {"model": endpoint.model_name, "base_url": endpoint.base_url,
         "temperature": endpoint.temperature,
         "shots": steering.shots if steering else 0},
    )
    click.echo(
        f"elicit ok: {result.stats.completed}/{result.stats.requested} judged "
        f"({result.stats.item_failures} failed) -> {out}"
    )


# ---------------------------------------------------------------------------
# mock-server
# ---------------------------------------------------------------------------

@main.command("mock-server")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8710, show_default=True, type=int)
@click.option("--fixed-reply", default=None, help="Pin every reply to this text.")
@handle_errors
def mock_server(host, port, fixed_reply):
    """Serve the deterministic mock judgment endpoint over HTTP."""
    import uvicorn

    app = create_app(MockJudge(fixed_reply=fixed_reply))
    click.echo(f"mock judgment endpoint at http://{host}:{port}/v1/chat/completions")
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
