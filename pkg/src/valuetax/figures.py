"""Figure data bundles and basic SVG rendering.

Data is the contract: every bundle carries a JSON-serializable payload
sufficient to regenerate its plot. SVG output is deliberately primitive
(rects, circles, paths, text) so rendering stays deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import MetricError
from .metrics import TaxReport, amplification_report, identify_hubs
from .taxonomy import Taxonomy, circumplex_order

FIGURE_KINDS = ("heatmap", "radar", "chord", "circumplex", "pareto", "amplification")


@dataclass(frozen=True)
class FigureBundle:
    kind: str
    data: dict
    svg: str | None = None


def _fmt(x: float) -> str:
    return f"{x:.4f}"


def _svg(width: int, height: int, parts: Sequence[str]) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">'
    )
    return "\n".join([head, *parts, "</svg>"]) + "\n"


def _diverging_color(value: float, bound: float) -> str:
    """Blue-white-red scale symmetric about zero."""
    t = 0.5 if bound == 0 else (value + bound) / (2 * bound)
    t = min(1.0, max(0.0, t))
    if t < 0.5:
        s = t / 0.5
        r, g, b = (int(59 + s * (255 - 59)), int(76 + s * (255 - 76)), int(192 + s * (255 - 192)))
    else:
        s = (t - 0.5) / 0.5
        r, g, b = (int(255 - s * (255 - 180)), int(255 - s * (255 - 4)), int(255 - s * (255 - 38)))
    return f"rgb({r},{g},{b})"


# ---------------------------------------------------------------------------
# bundles
# ---------------------------------------------------------------------------

def heatmap_bundle(report: TaxReport, render_svg: bool = False) -> FigureBundle:
    coupling = report.coupling
    entries = coupling.entries
    max_abs = float(np.max(np.abs(entries))) if entries.size else 0.0
    bound = max(0.2, max_abs)
    data = {
        "values": list(coupling.values),
        "entries": [[float(x) for x in row] for row in entries],
        "scale_bound": bound,
        "target": report.target,
    }
    svg = _render_heatmap(coupling.values, entries, bound) if render_svg else None
    return FigureBundle(kind="heatmap", data=data, svg=svg)


def radar_bundle(report: TaxReport, render_svg: bool = False) -> FigureBundle:
    degenerate = report.nvat == 0.0
    normalized = None if degenerate else [v / report.nvat for v in report.vat_profile]
    data = {
        "values": list(report.coupling.values),
        "vat_profile": list(report.vat_profile),
        "nvat": report.nvat,
        "normalized": normalized,
        "degenerate": degenerate,
        "target": report.target,
    }
    svg = None
    if render_svg:
        svg = _render_radar(report.coupling.values, normalized, degenerate)
    return FigureBundle(kind="radar", data=data, svg=svg)


def chord_bundle(report: TaxReport, top_edges: int = 10, render_svg: bool = False) -> FigureBundle:
    if top_edges < 1:
        raise MetricError(f"top_edges must be >= 1, got {top_edges!r}")
    pairs = [p for p in report.coupling.off_diagonal_pairs() if p[2] != 0.0]
    pairs.sort(key=lambda p: (-abs(p[2]), p[0], p[1]))
    edges = [
        {"source": u, "target": w, "weight": r, "sign": 1 if r > 0 else -1}
        for u, w, r in pairs[:top_edges]
    ]
    data = {"values": list(report.coupling.values), "edges": edges, "top_edges": top_edges}
    svg = _render_chord(report.coupling.values, edges) if render_svg else None
    return FigureBundle(kind="chord", data=data, svg=svg)


def circumplex_bundle(
    report: TaxReport,
    taxonomy: Taxonomy,
    stability: Mapping[str, float] | None = None,
    render_svg: bool = False,
) -> FigureBundle:
    angles = {v.id: v.circumplex_angle for v in taxonomy.values}
    profile = report.profile_map()
    points = []
    for vid in circumplex_order(taxonomy):
        if vid not in profile:
            continue
        point = {"value": vid, "angle_deg": angles[vid], "vat": profile[vid]}
        if stability is not None and vid in stability:
            point["stability"] = stability[vid]
        points.append(point)
    data = {"points": points, "target": report.target}
    svg = _render_circumplex(points) if render_svg else None
    return FigureBundle(kind="circumplex", data=data, svg=svg)


def pareto_bundle(
    reports: Sequence[tuple[str, TaxReport]], render_svg: bool = False
) -> FigureBundle:
    """Gain vs system tax across configurations, with dominance flags.

    A point is dominated when another achieves at least its gain at no more
    tax, strictly better in one of the two.
    """
    points = [
        {"label": label, "gain": r.gain, "nvat": r.nvat} for label, r in reports
    ]
    for p in points:
        p["dominated"] = any(
            q is not p
            and q["gain"] >= p["gain"]
            and q["nvat"] <= p["nvat"]
            and (q["gain"] > p["gain"] or q["nvat"] < p["nvat"])
            for q in points
        )
    data = {"points": points}
    svg = _render_pareto(points) if render_svg else None
    return FigureBundle(kind="pareto", data=data, svg=svg)


def amplification_bundle(
    reports: Sequence[tuple[str, TaxReport]],
    quantile: float = 0.75,
    persistence: float = 0.75,
    render_svg: bool = False,
) -> FigureBundle:
    profiles = [(label, r.profile_map()) for label, r in reports]
    hubs = identify_hubs(profiles, quantile=quantile, persistence=persistence)
    summary = amplification_report(profiles, hubs)
    data = {
        "quantile": quantile,
        "persistence": persistence,
        "profiles": [
            {"label": label, "vat": {k: float(v) for k, v in prof.items()}}
            for label, prof in profiles
        ],
        **summary.to_dict(),
    }
    svg = _render_amplification(summary, profiles) if render_svg else None
    return FigureBundle(kind="amplification", data=data, svg=svg)


# ---------------------------------------------------------------------------
# SVG renderers
# ---------------------------------------------------------------------------

def _render_heatmap(values: Sequence[str], entries: np.ndarray, bound: float) -> str:
    cell = 26
    margin = 110
    n = len(values)
    size = margin + n * cell + 20
    parts = []
    for i, vid in enumerate(values):
        y = margin + i * cell + cell * 0.65
        parts.append(
            f'<text x="{margin - 6}" y="{_fmt(y)}" font-size="10" text-anchor="end">{vid}</text>'
        )
        x = margin + i * cell + cell * 0.5
        parts.append(
            f'<text x="{_fmt(x)}" y="{margin - 6}" font-size="10" text-anchor="start" '
            f'transform="rotate(-60 {_fmt(x)} {margin - 6})">{vid}</text>'
        )
    for i in range(n):
        for j in range(n):
            color = "rgb(240,240,240)" if i == j else _diverging_color(float(entries[i, j]), bound)
            parts.append(
                f'<rect x="{margin + j * cell}" y="{margin + i * cell}" width="{cell}" '
                f'height="{cell}" fill="{color}" stroke="white" stroke-width="1"/>'
            )
    parts.append(
        f'<text x="{margin}" y="{size - 6}" font-size="10">scale bound ±{_fmt(bound)}</text>'
    )
    return _svg(size, size, parts)


def _polar(cx: float, cy: float, radius: float, angle_deg: float) -> tuple[float, float]:
    # 0 degrees points up, angles grow clockwise
    rad = math.radians(angle_deg - 90.0)
    return cx + radius * math.cos(rad), cy + radius * math.sin(rad)


def _render_radar(values: Sequence[str], normalized: Sequence[float] | None, degenerate: bool) -> str:
    size = 420
    cx = cy = size / 2
    rmax = size / 2 - 70
    parts = []
    n = len(values)
    if degenerate or normalized is None:
        parts.append(
            f'<text x="{cx}" y="{cy}" font-size="14" text-anchor="middle">'
            "system tax is zero; profile not normalizable</text>"
        )
        return _svg(size, size, parts)
    top = max(max(normalized), 1e-9)
    for i, vid in enumerate(values):
        angle = 360.0 * i / n
        x, y = _polar(cx, cy, rmax, angle)
        parts.append(
            f'<line x1="{cx}" y1="{cy}" x2="{_fmt(x)}" y2="{_fmt(y)}" stroke="#ccc"/>'
        )
        lx, ly = _polar(cx, cy, rmax + 16, angle)
        parts.append(
            f'<text x="{_fmt(lx)}" y="{_fmt(ly)}" font-size="10" text-anchor="middle">{vid}</text>'
        )
    coords = []
    for i, v in enumerate(normalized):
        angle = 360.0 * i / n
        x, y = _polar(cx, cy, rmax * v / top, angle)
        coords.append(f"{_fmt(x)},{_fmt(y)}")
    parts.append(
        f'<polygon points="{" ".join(coords)}" fill="rgba(59,76,192,0.25)" '
        'stroke="rgb(59,76,192)" stroke-width="2"/>'
    )
    return _svg(size, size, parts)


def _render_chord(values: Sequence[str], edges: Sequence[dict]) -> str:
    size = 420
    cx = cy = size / 2
    radius = size / 2 - 70
    n = len(values)
    pos = {}
    parts = []
    for i, vid in enumerate(values):
        angle = 360.0 * i / n
        x, y = _polar(cx, cy, radius, angle)
        pos[vid] = (x, y)
        parts.append(f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="4" fill="#444"/>')
        lx, ly = _polar(cx, cy, radius + 16, angle)
        parts.append(
            f'<text x="{_fmt(lx)}" y="{_fmt(ly)}" font-size="10" text-anchor="middle">{vid}</text>'
        )
    for edge in edges:
        x1, y1 = pos[edge["source"]]
        x2, y2 = pos[edge["target"]]
        width = 1.0 + 4.0 * abs(edge["weight"])
        color = "rgb(180,4,38)" if edge["sign"] > 0 else "rgb(59,76,192)"
        parts.append(
            f'<path d="M {_fmt(x1)} {_fmt(y1)} Q {_fmt(cx)} {_fmt(cy)} {_fmt(x2)} {_fmt(y2)}" '
            f'fill="none" stroke="{color}" stroke-width="{_fmt(width)}" stroke-opacity="0.7"/>'
        )
    return _svg(size, size, parts)


def _render_circumplex(points: Sequence[dict]) -> str:
    size = 420
    cx = cy = size / 2
    rmax = size / 2 - 70
    parts = [f'<circle cx="{cx}" cy="{cy}" r="{rmax}" fill="none" stroke="#ddd"/>']
    top = max((p["vat"] for p in points), default=0.0)
    top = max(top, 1e-9)
    coords = []
    for p in points:
        r = rmax * p["vat"] / top
        x, y = _polar(cx, cy, r, p["angle_deg"])
        coords.append(f"{_fmt(x)},{_fmt(y)}")
        opacity = 1.0
        if "stability" in p and top > 0:
            opacity = max(0.25, 1.0 - min(1.0, p["stability"] / top))
        parts.append(
            f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="5" fill="rgb(59,76,192)" '
            f'fill-opacity="{_fmt(opacity)}"/>'
        )
        lx, ly = _polar(cx, cy, rmax + 16, p["angle_deg"])
        parts.append(
            f'<text x="{_fmt(lx)}" y="{_fmt(ly)}" font-size="10" text-anchor="middle">{p["value"]}</text>'
        )
    if len(coords) > 2:
        parts.append(
            f'<polygon points="{" ".join(coords)}" fill="none" stroke="rgb(59,76,192)"/>'
        )
    return _svg(size, size, parts)


def _render_pareto(points: Sequence[dict]) -> str:
    width, height = 460, 360
    margin = 60
    gains = [p["gain"] for p in points] or [0.0]
    nvats = [p["nvat"] for p in points] or [0.0]
    gmin, gmax = min(gains + [0.0]), max(gains + [0.0])
    nmin, nmax = 0.0, max(nvats + [0.1])
    gspan = (gmax - gmin) or 1.0
    nspan = (nmax - nmin) or 1.0

    def sx(g: float) -> float:
        return margin + (g - gmin) / gspan * (width - 2 * margin)

    def sy(v: float) -> float:
        return height - margin - (v - nmin) / nspan * (height - 2 * margin)

    parts = [
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" y2="{height - margin}" stroke="#333"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" stroke="#333"/>',
        f'<text x="{width / 2}" y="{height - 14}" font-size="11" text-anchor="middle">gain</text>',
        f'<text x="16" y="{height / 2}" font-size="11" text-anchor="middle" transform="rotate(-90 16 {height / 2})">system tax</text>',
    ]
    for p in points:
        x, y = sx(p["gain"]), sy(p["nvat"])
        fill = "none" if p["dominated"] else "rgb(59,76,192)"
        parts.append(
            f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="5" fill="{fill}" stroke="rgb(59,76,192)"/>'
        )
        parts.append(
            f'<text x="{_fmt(x + 8)}" y="{_fmt(y - 6)}" font-size="9">{p["label"]}</text>'
        )
    return _svg(width, height, parts)


def _render_amplification(summary, profiles) -> str:
    width, height = 380, 320
    margin = 50
    hubs = set(summary.hubs)
    hub_vals, other_vals = [], []
    for _, prof in profiles:
        for vid, vat in prof.items():
            (hub_vals if vid in hubs else other_vals).append(vat)
    top = max(hub_vals + other_vals + [1e-9])

    def sy(v: float) -> float:
        return height - margin - v / top * (height - 2 * margin)

    parts = [
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" stroke="#333"/>',
        f'<text x="{width * 0.35}" y="{height - 18}" font-size="11" text-anchor="middle">hubs</text>',
        f'<text x="{width * 0.7}" y="{height - 18}" font-size="11" text-anchor="middle">non-hubs</text>',
    ]
    for x0, vals, color in (
        (width * 0.35, hub_vals, "rgb(180,4,38)"),
        (width * 0.7, other_vals, "rgb(59,76,192)"),
    ):
        for k, v in enumerate(sorted(vals)):
            jitter = (k % 7 - 3) * 4
            parts.append(
                f'<circle cx="{_fmt(x0 + jitter)}" cy="{_fmt(sy(v))}" r="4" '
                f'fill="{color}" fill-opacity="0.6"/>'
            )
        mean = sum(vals) / len(vals) if vals else 0.0
        parts.append(
            f'<line x1="{_fmt(x0 - 24)}" y1="{_fmt(sy(mean))}" x2="{_fmt(x0 + 24)}" '
            f'y2="{_fmt(sy(mean))}" stroke="{color}" stroke-width="2"/>'
        )
    return _svg(width, height, parts)
