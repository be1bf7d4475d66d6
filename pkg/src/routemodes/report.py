"""Operator-facing renderings and canonical data files.

Every renderer is a pure function from data to text, with fixed float
formatting, so identical inputs give identical bytes.  Figures are
standalone SVG; the flow export is a plain table for external Sankey
renderers, since the layout is cosmetic and the values are the contract.
"""

from __future__ import annotations

import csv
from datetime import datetime, timezone
from typing import Iterable, Sequence

import numpy as np

from .core import (
    ERROR,
    OTHER,
    UNKNOWN,
    AggregateVector,
    CatchmentLabel,
    ModeAssignment,
    SimilarityMatrix,
    Snapshot,
    TransitionMatrix,
    WeightVector,
)
from .quantify import transition_matrix

__all__ = [
    "render_heatmap",
    "render_stackplot",
    "export_sankey",
    "write_snapshots",
    "render_transition_table",
    "export_similarity_csv",
]

PALETTE = (
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948",
    "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac", "#86bcb6", "#d37295",
)


def _date(ts: int) -> str:
    return datetime.fromtimestamp(ts, tz=timezone.utc).strftime("%Y-%m-%d")


def _svg_open(width: float, height: float) -> list[str]:
    return [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" '
        f'height="{height:.0f}" viewBox="0 0 {width:.0f} {height:.0f}">',
    ]


def render_heatmap(matrix: SimilarityMatrix, annotations: ModeAssignment | None = None) -> str:
    """Gray-scale grid of all-pairs similarity.

    Shading is normalized to the observed similarity range (darkest = most
    similar) because low-coverage studies never get near 1.0; the legend
    records the mapping.  Mode boundaries, when given, appear as tick
    marks along the top edge.
    """
    n = len(matrix)
    if n < 1:
        raise ValueError("heatmap needs at least one timestamp")
    cell = max(4, min(40, 640 // n))
    left, top, right, bottom = 90, 24, 20, 60
    width = left + n * cell + right
    height = top + n * cell + bottom
    lo = float(matrix.values.min())
    hi = float(matrix.values.max())
    span = hi - lo

    lines = _svg_open(width, height)
    lines.append(f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>')
    for i in range(n):
        for j in range(n):
            value = float(matrix.values[i, j])
            gray = 0 if span == 0 else 255 - round(255 * (value - lo) / span)
            color = f"#{gray:02x}{gray:02x}{gray:02x}"
            x = left + j * cell
            y = top + i * cell
            lines.append(
                f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{color}"/>'
            )
    step = max(1, n // 8)
    for k in range(0, n, step):
        ts = matrix.times[k]
        lines.append(
            f'<text x="{left - 6}" y="{top + k * cell + cell}" font-size="10" '
            f'text-anchor="end" font-family="monospace">{_date(ts)}</text>'
        )
        lines.append(
            f'<text x="{left + k * cell}" y="{top + n * cell + 14}" font-size="10" '
            f'text-anchor="start" font-family="monospace">{_date(ts)}</text>'
        )
    if annotations is not None:
        previous = None
        for k, ts in enumerate(matrix.times):
            current = annotations.cluster_of.get(ts)
            if previous is not None and current != previous:
                x = left + k * cell
                lines.append(
                    f'<line x1="{x}" y1="{top - 10}" x2="{x}" y2="{top}" '
                    'stroke="#cc0000" stroke-width="2"/>'
                )
            previous = current
    lines.append(
        f'<text x="{left}" y="{height - 12}" font-size="11" font-family="monospace">'
        f"scale: phi {lo:.4f} = white, phi {hi:.4f} = black</text>"
    )
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def _stack_order(
    series: Sequence[AggregateVector], site_order: Sequence[CatchmentLabel] | None
) -> list[CatchmentLabel]:
    seen: dict[CatchmentLabel, float] = {}
    for vector in series:
        for label, count in vector.counts.items():
            seen[label] = seen.get(label, 0.0) + float(count)
    sites = [lab for lab in seen if lab.is_site]
    sites.sort(key=lambda lab: (-seen[lab] / len(series), str(lab)))
    reserved = [lab for lab in (UNKNOWN, ERROR, OTHER) if lab in seen]
    ordered = sites + reserved
    if site_order:
        given = [lab for lab in site_order if lab in seen]
        ordered = given + [lab for lab in ordered if lab not in given]
    return ordered


def render_stackplot(
    series: Sequence[AggregateVector],
    site_order: Sequence[CatchmentLabel] | None = None,
) -> str:
    """Stacked bands of weighted network count per catchment over time."""
    if not series:
        raise ValueError("stackplot needs at least one aggregate")
    series = sorted(series, key=lambda v: v.time)
    order = _stack_order(series, site_order)
    times = [v.time for v in series]
    left, top, right, bottom = 70, 20, 140, 40
    plot_w, plot_h = 560, 320
    width = left + plot_w + right
    height = top + plot_h + bottom

    if len(times) > 1 and times[-1] > times[0]:
        xs = [left + plot_w * (t - times[0]) / (times[-1] - times[0]) for t in times]
    else:
        xs = [left, left + plot_w]
    peak = max((v.total() for v in series), default=0.0)

    def y_of(value: float) -> float:
        if peak <= 0:
            return top + plot_h
        return top + plot_h - plot_h * value / peak

    lines = _svg_open(width, height)
    lines.append(f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>')
    floor = [0.0] * len(series)
    for rank, label in enumerate(order):
        ceiling = [floor[i] + vector.get(label) for i, vector in enumerate(series)]
        upper = ceiling if len(times) > 1 else [ceiling[0], ceiling[0]]
        lower = floor if len(times) > 1 else [floor[0], floor[0]]
        points = [f"{x:.2f},{y_of(v):.2f}" for x, v in zip(xs, upper)]
        points += [f"{x:.2f},{y_of(v):.2f}" for x, v in zip(reversed(xs), reversed(lower))]
        floor = ceiling
        color = PALETTE[rank % len(PALETTE)]
        lines.append(
            f'<polygon data-label="{label}" fill="{color}" points="{" ".join(points)}"/>'
        )
        swatch_y = top + 16 * rank
        lines.append(
            f'<rect x="{left + plot_w + 10}" y="{swatch_y}" width="10" height="10" fill="{color}"/>'
        )
        lines.append(
            f'<text x="{left + plot_w + 24}" y="{swatch_y + 9}" font-size="10" '
            f'font-family="monospace">{label}</text>'
        )
    lines.append(
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + plot_h}" stroke="#000000"/>'
    )
    lines.append(
        f'<line x1="{left}" y1="{top + plot_h}" x2="{left + plot_w}" y2="{top + plot_h}" '
        'stroke="#000000"/>'
    )
    lines.append(
        f'<text x="{left - 6}" y="{top + 10}" font-size="10" text-anchor="end" '
        f'font-family="monospace">{peak:.0f}</text>'
    )
    for pos, ts in ((0, times[0]), (len(xs) - 1, times[-1])):
        lines.append(
            f'<text x="{xs[pos]:.2f}" y="{top + plot_h + 16}" font-size="10" '
            f'font-family="monospace">{_date(ts)}</text>'
        )
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def _flow_value(value: float) -> str:
    if value == int(value):
        return str(int(value))
    return f"{value:.6f}"


def export_sankey(
    hop_snapshots: Sequence[tuple[int, Snapshot]],
    weights: WeightVector = WeightVector({}),
) -> str:
    """Flow table between consecutive hop levels: ``source,target,value``.

    Nodes are named ``label_hop``; zero links are omitted.  All levels
    must observe the same network universe.
    """
    if len(hop_snapshots) < 2:
        raise ValueError("sankey export needs at least two hop levels")
    levels = sorted(hop_snapshots, key=lambda pair: pair[0])
    hops = [hop for hop, _ in levels]
    if len(set(hops)) != len(hops):
        raise ValueError(f"duplicate hop indexes: {hops}")
    first = levels[0][1]
    for _, snap in levels[1:]:
        if not np.array_equal(snap.network_keys, first.network_keys):
            raise ValueError("hop snapshots cover different network universes")

    rows = ["source_node,target_node,value"]
    for (hop_a, snap_a), (hop_b, snap_b) in zip(levels, levels[1:]):
        matrix = transition_matrix(snap_a, snap_b, weights)
        for i, from_label in enumerate(matrix.labels):
            for j, to_label in enumerate(matrix.labels):
                value = float(matrix.cells[i, j])
                if value > 0:
                    rows.append(f"{from_label}_{hop_a},{to_label}_{hop_b},{_flow_value(value)}")
    return "\n".join(rows) + "\n"


def write_snapshots(series: Iterable[Snapshot], path) -> None:
    """Write canonical rows sorted by time then network key."""
    ordered = sorted(series, key=lambda snap: snap.time)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["time", "network", "label"])
        for snap in ordered:
            for key, label in snap.items():
                writer.writerow([snap.time, key, str(label)])


def export_similarity_csv(matrix: SimilarityMatrix) -> str:
    """Grid export with epoch-time headers and 4-decimal cells."""
    header = "time," + ",".join(str(t) for t in matrix.times)
    rows = [header]
    for i, t in enumerate(matrix.times):
        cells = ",".join(f"{matrix.values[i, j]:.4f}" for j in range(len(matrix)))
        rows.append(f"{t},{cells}")
    return "\n".join(rows) + "\n"


def render_transition_table(matrix: TransitionMatrix, highlight_threshold: float = 0.0) -> str:
    """Plain-text transition table with off-diagonal flags and totals.

    Off-diagonal cells that are nonzero and at least the threshold get a
    ``*`` flag; they are the movements worth an operator's attention.
    """
    names = [str(label) for label in matrix.labels]
    n = len(names)

    def fmt(value: float) -> str:
        return str(int(value)) if value == int(value) else f"{value:.2f}"

    body = []
    for i in range(n):
        row = []
        for j in range(n):
            value = float(matrix.cells[i, j])
            flag = "*" if i != j and value > 0 and value >= highlight_threshold else ""
            row.append(fmt(value) + flag)
        row.append(fmt(float(matrix.cells[i].sum())))
        body.append(row)
    col_totals = [fmt(float(matrix.cells[:, j].sum())) for j in range(n)]
    col_totals.append(fmt(matrix.total()))

    header = ["from\\to"] + names + ["total"]
    table = [header] + [[names[i]] + body[i] for i in range(n)] + [["total"] + col_totals]
    widths = [max(len(row[c]) for row in table) for c in range(len(header))]
    lines = []
    for row in table:
        cells = [row[0].ljust(widths[0])] + [
            row[c].rjust(widths[c]) for c in range(1, len(row))
        ]
        lines.append("  ".join(cells).rstrip())
    return "\n".join(lines) + "\n"
