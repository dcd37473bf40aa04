"""Stable export formats: line-oriented timeline text, SVG Gantt, CSV tables.

Every format carries a version marker on its first line (or header) so
downstream parsers can pin what they read.
"""

from __future__ import annotations

import csv
import io
from fractions import Fraction
from typing import Sequence

from .costs import CostReport, ExtrapolationRow, Table1Row
from .schedule import Timeline

TIMELINE_FORMAT = "cyclicdp-timeline v1"
TABLE1_FORMAT = "cyclicdp-table1-csv v1"
TRAJECTORY_FORMAT = "cyclicdp-trajectories-csv v1"
EXTRAPOLATION_FORMAT = "cyclicdp-extrapolation-csv v1"

# Fixed micro-batch palette; tests assert structure, never pixels.
PALETTE = (
    "#4c72b0",
    "#dd8452",
    "#55a868",
    "#c44e52",
    "#8172b3",
    "#937860",
    "#da8bc3",
    "#8c8c8c",
    "#ccb974",
    "#64b5cd",
)


def _fmt(value) -> str:
    if isinstance(value, Fraction):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def timeline_to_text(tl: Timeline) -> str:
    """One record per line: tasks then communication events.

    task <device> <start> <duration> <kind> <micro_batch> <stage> <step> <version>
    comm <boundary> <kind> <src> <dst> <stage> <micro_batch|-> <payload> <depth>
    """
    lines = [f"# {TIMELINE_FORMAT}"]
    lines.append(
        f"# scheme={tl.scheme.value} n={tl.n} horizon={tl.horizon} devices={len(tl.devices)}"
    )
    for t in tl.tasks:
        lines.append(
            "task\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}".format(
                t.device,
                t.start,
                t.duration,
                t.kind.value,
                t.micro_batch,
                t.stage,
                t.training_step,
                t.param_version,
            )
        )
    for e in tl.comm_events:
        lines.append(
            "comm\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}".format(
                e.boundary,
                e.kind.value,
                e.src,
                e.dst,
                e.stage,
                e.micro_batch if e.micro_batch is not None else "-",
                _fmt(e.payload),
                e.depth,
            )
        )
    return "\n".join(lines) + "\n"


def timeline_to_svg(tl: Timeline, cell: int = 26, row_h: int = 22) -> str:
    """Gantt rendering: one row per device, one cell per time step, cells
    colored by micro-batch. Point-to-point events are single-headed arrows
    between rows; collectives are double-headed spans."""
    left, top = 90, 30
    width = left + tl.horizon * cell + 20
    rows = {d.id: idx for idx, d in enumerate(tl.devices)}
    height = top + len(tl.devices) * row_h + 40
    out = io.StringIO()
    out.write(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">\n'
    )
    out.write(f"<!-- {TIMELINE_FORMAT} gantt; scheme={tl.scheme.value} n={tl.n} -->\n")
    out.write(
        "<defs>"
        '<marker id="arrow" markerWidth="8" markerHeight="8" refX="6" refY="3" '
        'orient="auto"><path d="M0,0 L6,3 L0,6 z" fill="#333"/></marker>'
        '<marker id="arrowrev" markerWidth="8" markerHeight="8" refX="2" refY="3" '
        'orient="auto"><path d="M8,0 L2,3 L8,6 z" fill="#333"/></marker>'
        "</defs>\n"
    )
    for d, idx in rows.items():
        y = top + idx * row_h
        out.write(
            f'<text x="4" y="{y + row_h - 7}" font-size="11" font-family="monospace">{d}</text>\n'
        )
    for t in tl.tasks:
        idx = rows[t.device]
        x = left + (t.start - 1) * cell
        y = top + idx * row_h
        w = t.duration * cell - 2
        color = PALETTE[(t.micro_batch - 1) % len(PALETTE)]
        out.write(
            f'<rect x="{x}" y="{y + 2}" width="{w}" height="{row_h - 4}" '
            f'fill="{color}" stroke="#222" stroke-width="0.5" '
            f'data-task="{t.kind.value}{t.stage}" data-mb="{t.micro_batch}" '
            f'data-step="{t.training_step}"/>\n'
        )
        label = f"{t.kind.value}{t.stage}"
        out.write(
            f'<text x="{x + 3}" y="{y + row_h - 7}" font-size="9" fill="white" '
            f'font-family="monospace">{label}</text>\n'
        )
    for e in tl.comm_events:
        x = left + e.boundary * cell
        if e.is_point_to_point and e.dst in rows and e.src in rows:
            y1 = top + rows[e.src] * row_h + row_h // 2
            y2 = top + rows[e.dst] * row_h + row_h // 2
            out.write(
                f'<line x1="{x}" y1="{y1}" x2="{x}" y2="{y2}" stroke="#333" '
                f'stroke-width="1" marker-end="url(#arrow)" data-comm="{e.kind.value}"/>\n'
            )
        else:
            y1, y2 = top, top + len(tl.devices) * row_h
            out.write(
                f'<line x1="{x}" y1="{y1}" x2="{x}" y2="{y2}" stroke="#333" '
                f'stroke-width="1.6" marker-start="url(#arrowrev)" '
                f'marker-end="url(#arrow)" stroke-dasharray="4,2" '
                f'data-comm="{e.kind.value}"/>\n'
            )
    out.write("</svg>\n")
    return out.getvalue()


_REPORT_FIELDS = (
    "peak_activation_memory_per_device",
    "steady_activation_memory_per_device",
    "parameter_memory_per_device",
    "comm_volume_per_training_step",
    "state_comm_volume_per_training_step",
    "max_comm_steps_per_boundary",
    "device_count",
    "idle_fraction",
    "busy_devices_per_step",
)


def cost_report_to_csv(report: CostReport, scheme: str, n: int) -> str:
    out = io.StringIO()
    out.write(f"# {TABLE1_FORMAT}\n")
    writer = csv.writer(out)
    writer.writerow(["scheme", "n", "field", "value"])
    for name in _REPORT_FIELDS:
        writer.writerow([scheme, n, name, _fmt(getattr(report, name))])
    return out.getvalue()


def table1_to_csv(rows: Sequence[Table1Row]) -> str:
    out = io.StringIO()
    out.write(f"# {TABLE1_FORMAT}\n")
    writer = csv.writer(out)
    header = ["scheme", "n", "equal", "mismatches", "degenerate_fields"]
    for side in ("closed", "measured"):
        header.extend(f"{side}_{f}" for f in _REPORT_FIELDS)
    writer.writerow(header)
    for row in rows:
        record = [
            row.scheme.value,
            row.n,
            int(row.equal),
            ";".join(row.mismatches),
            ";".join(row.degenerate_fields),
        ]
        for side in (row.closed, row.measured):
            record.extend(_fmt(getattr(side, f)) for f in _REPORT_FIELDS)
        writer.writerow(record)
    return out.getvalue()


def trajectories_to_csv(result) -> str:
    out = io.StringIO()
    out.write(f"# {TRAJECTORY_FORMAT}\n")
    writer = csv.writer(out)
    writer.writerow(["step", "rule", "loss"])
    for name, run in result.runs.items():
        for step, loss in enumerate(run.losses, start=1):
            writer.writerow([step, name, repr(loss)])
    return out.getvalue()


def extrapolation_to_csv(
    rows: Sequence[ExtrapolationRow], series_by_n: dict | None = None
) -> str:
    out = io.StringIO()
    out.write(f"# {EXTRAPOLATION_FORMAT}\n")
    writer = csv.writer(out)
    writer.writerow(["n", "dp_peak", "cdp_peak", "ratio"])
    for row in rows:
        writer.writerow([row.n, _fmt(row.dp_peak), _fmt(row.cdp_peak), _fmt(row.ratio)])
    if series_by_n:
        writer.writerow([])
        writer.writerow(["n", "mode", "t", "value"])
        for n, (dp_series, cdp_series) in sorted(series_by_n.items()):
            for t, v in enumerate(dp_series):
                writer.writerow([n, "dp", t, _fmt(v)])
            for t, v in enumerate(cdp_series):
                writer.writerow([n, "cdp", t, _fmt(v)])
    return out.getvalue()


def series_to_svg(series_by_label: dict, width: int = 640, height: int = 320) -> str:
    """Overlaid line plot of memory series, one polyline per label."""
    pad = 40
    all_values = [float(v) for series in series_by_label.values() for v in series]
    vmax = max(all_values) if all_values else 1.0
    vmax = vmax or 1.0
    length = max((len(s) for s in series_by_label.values()), default=1)
    out = io.StringIO()
    out.write(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">\n'
    )
    out.write(f"<!-- {EXTRAPOLATION_FORMAT} plot -->\n")
    out.write(
        f'<rect x="{pad}" y="{pad}" width="{width - 2 * pad}" height="{height - 2 * pad}" '
        'fill="none" stroke="#999"/>\n'
    )
    for idx, (label, series) in enumerate(series_by_label.items()):
        color = PALETTE[idx % len(PALETTE)]
        points = []
        for t, v in enumerate(series):
            x = pad + (width - 2 * pad) * (t / max(1, length - 1))
            y = height - pad - (height - 2 * pad) * (float(v) / vmax)
            points.append(f"{x:.1f},{y:.1f}")
        out.write(
            f'<polyline points="{" ".join(points)}" fill="none" stroke="{color}" '
            f'stroke-width="1.5" data-label="{label}"/>\n'
        )
        out.write(
            f'<text x="{pad + 6}" y="{pad + 14 + idx * 14}" font-size="11" '
            f'fill="{color}" font-family="monospace">{label}</text>\n'
        )
    out.write("</svg>\n")
    return out.getvalue()
