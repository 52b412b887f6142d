"""
Result tables, box-plot statistics and SVG plots.

Output files written by :func:`write_bundle`:

``metrics_table.txt``
    Fixed-width table, one row per shoe, one column per candidate for each
    of step cycle time, mean acceleration magnitude and its variance.
``metrics.csv``
    One row per session, every metric. Sorted by candidate then shoe.
``boxstats.json``
    Box-plot statistics of per-cycle joint ranges, per session and per
    shoe group.
``cycles.csv``
    Joint-angle cycles resampled to 0-100 % of the gait cycle.
``*.svg``
    Box plots and cycle overlays (``plot-svg`` format).

All numbers are written with four decimals, rounded half to even from the
shortest decimal representation of the value.
"""
from __future__ import annotations

import csv
import io
import json
import re
import warnings
from dataclasses import dataclass, field
from decimal import ROUND_HALF_EVEN, Decimal
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .metrics import BoxStats, box_stats, normalized_cycles
from .session import ShoeConfig

FORMATS = ("table-text", "table-structured", "boxstats-structured", "plot-svg")
REPORT_JOINTS = ("knee", "ankle")
REPORT_SIDE = "left"
SHOE_GROUPS = {
    "walking_height": ("H1", "H2", "H3"),
    "platform_height": ("H4", "H5", "H6", "H7"),
    "overall_height": ("H3", "H7"),
}

CSV_COLUMNS = (
    "candidate_id",
    "shoe",
    "platform_height_in",
    "heel_height_in",
    "walking_height_in",
    "n_cycles",
    "step_cycle_time_s",
    "mean_accel_magnitude_mps2",
    "accel_variance_mps2sq",
    "mean_linear_accel_mps2",
    "linear_accel_variance_mps2sq",
)


def fmt4(value) -> str:
    """Four decimals, round half to even on the shortest decimal form of ``value``."""
    if value is None:
        return ""
    return str(Decimal(repr(float(value))).quantize(Decimal("0.0001"), rounding=ROUND_HALF_EVEN))


def _round4(value: float) -> float:
    return float(fmt4(value))


def _shoe_key(label: str):
    m = re.fullmatch(r"([A-Za-z]*)(\d+)", label)
    return (m.group(1), int(m.group(2))) if m else (label, 0)


@dataclass
class ReportRow:
    candidate_id: str
    shoe: ShoeConfig
    step_cycle_time_s: float
    mean_accel_magnitude_mps2: float
    accel_variance_mps2sq: float
    n_cycles: int | None = None
    mean_linear_accel_mps2: float | None = None
    linear_accel_variance_mps2sq: float | None = None
    joint_ranges: dict[str, list[float]] = field(default_factory=dict)

    @property
    def sort_key(self):
        return (self.candidate_id, _shoe_key(self.shoe.label))


@dataclass
class CycleCurves:
    candidate_id: str
    shoe: str
    side: str
    joint: str
    curves: np.ndarray  # (n_cycles, 101) degrees


@dataclass
class ReportBundle:
    rows: list[ReportRow]
    groups: dict  # candidate -> joint -> group -> shoe -> BoxStats
    sessions: dict  # candidate -> shoe -> "<side>_<joint>" -> BoxStats
    curves: list[CycleCurves] = field(default_factory=list)


def row_from_result(result) -> ReportRow:
    m = result.metrics
    return ReportRow(
        candidate_id=result.meta.candidate_id,
        shoe=result.meta.shoe,
        step_cycle_time_s=m.mean_step_cycle_time_s,
        mean_accel_magnitude_mps2=m.mean_accel_magnitude_mps2,
        accel_variance_mps2sq=m.accel_variance_mps2sq,
        n_cycles=m.n_cycles if m.step_cycle_times_s else None,
        mean_linear_accel_mps2=m.mean_linear_accel_mps2,
        linear_accel_variance_mps2sq=m.linear_accel_variance_mps2sq,
        joint_ranges=dict(m.joint_ranges),
    )


def build_bundle(
    results: Iterable,
    joints: Sequence[str] = REPORT_JOINTS,
    side: str = REPORT_SIDE,
    groups: dict = SHOE_GROUPS,
) -> ReportBundle:
    """
    Collect session results into one report.

    Group box plots are produced for a candidate only when at least two
    shoes of the group are present.
    """
    results = list(results)
    rows = sorted((row_from_result(r) for r in results), key=lambda r: r.sort_key)

    sessions: dict = {}
    for row in rows:
        if row.joint_ranges:
            sessions.setdefault(row.candidate_id, {})[row.shoe.label] = {
                key: box_stats(values) for key, values in sorted(row.joint_ranges.items())
            }

    grouped: dict = {}
    for candidate in sorted({r.candidate_id for r in rows}):
        by_shoe = {r.shoe.label: r for r in rows if r.candidate_id == candidate and r.joint_ranges}
        for joint in joints:
            key = f"{side}_{joint}"
            for group, labels in groups.items():
                present = [s for s in sorted(labels, key=_shoe_key) if s in by_shoe and key in by_shoe[s].joint_ranges]
                if len(present) < 2:
                    continue
                grouped.setdefault(candidate, {}).setdefault(joint, {})[group] = {
                    s: box_stats(by_shoe[s].joint_ranges[key]) for s in present
                }

    curves = []
    for r in sorted(results, key=lambda r: (r.meta.candidate_id, _shoe_key(r.meta.shoe.label))):
        if not r.cycles:
            continue
        for s in r.angles:
            curves.append(
                CycleCurves(r.meta.candidate_id, r.meta.shoe.label, s.side, s.joint, normalized_cycles(s, r.cycles))
            )
    return ReportBundle(rows, grouped, sessions, curves)


# ---------------------------------------------------------------------------
# writers


def format_table_text(rows: Sequence[ReportRow]) -> str:
    """Shoe-by-candidate table of step cycle time, mean acceleration and its variance."""
    candidates = sorted({r.candidate_id for r in rows})
    shoes = {}
    for r in rows:
        shoes.setdefault(r.shoe.label, r.shoe)
    cell = {(r.shoe.label, r.candidate_id): r for r in rows}
    blocks = (
        ("Step Cycle Time (s)", "step_cycle_time_s"),
        ("Mean Acceleration (m/s^2)", "mean_accel_magnitude_mps2"),
        ("Variance of Acceleration (m/s^2)^2", "accel_variance_mps2sq"),
    )
    n = max(len(candidates), 1)
    base = max([10] + [len(c) for c in candidates])
    # widen cells so each block title fits over its candidate columns
    widths = [max(base, -(-(len(title) - 2 * (n - 1)) // n)) for title, _ in blocks]
    head1 = f"{'Shoe':<6}{'Platform':>10}{'Heel':>10}"
    head2 = f"{'':<6}{'(in)':>10}{'(in)':>10}"
    for (title, _), width in zip(blocks, widths):
        head1 += "  " + title.center(n * (width + 2) - 2)
        head2 += "".join(f"  {c:>{width}}" for c in candidates)
    lines = [head1.rstrip(), head2.rstrip(), "-" * len(head2)]
    for label in sorted(shoes, key=_shoe_key):
        shoe = shoes[label]
        line = f"{label:<6}{shoe.platform_height_in!r:>10}{shoe.heel_height_in!r:>10}"
        for (_, attr), width in zip(blocks, widths):
            for c in candidates:
                row = cell.get((label, c))
                line += f"  {fmt4(getattr(row, attr)) if row else '-':>{width}}"
        lines.append(line)
    return "\n".join(lines) + "\n"


def format_table_csv(rows: Sequence[ReportRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in rows:
        writer.writerow(
            [
                r.candidate_id,
                r.shoe.label,
                repr(float(r.shoe.platform_height_in)),
                repr(float(r.shoe.heel_height_in)),
                repr(float(r.shoe.walking_height_in)),
                "" if r.n_cycles is None else r.n_cycles,
                fmt4(r.step_cycle_time_s),
                fmt4(r.mean_accel_magnitude_mps2),
                fmt4(r.accel_variance_mps2sq),
                fmt4(r.mean_linear_accel_mps2),
                fmt4(r.linear_accel_variance_mps2sq),
            ]
        )
    return buf.getvalue()


def read_table_csv(path) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _stats_json(stats: BoxStats) -> dict:
    d = stats.to_dict()
    for key in ("median", "q1", "q3", "whisker_low", "whisker_high"):
        d[key] = _round4(d[key])
    d["outliers"] = [_round4(v) for v in d["outliers"]]
    return d


def boxstats_tree(bundle: ReportBundle) -> dict:
    groups = {
        c: {j: {g: {s: _stats_json(b) for s, b in shoes.items()} for g, shoes in gs.items()} for j, gs in js.items()}
        for c, js in bundle.groups.items()
    }
    sessions = {
        c: {s: {k: _stats_json(b) for k, b in joints.items()} for s, joints in shoes.items()}
        for c, shoes in bundle.sessions.items()
    }
    return {
        "group_definitions": {g: list(v) for g, v in SHOE_GROUPS.items()},
        "groups": groups,
        "sessions": sessions,
        "units": "degrees",
    }


def format_boxstats_json(bundle: ReportBundle) -> str:
    return json.dumps(boxstats_tree(bundle), indent=2, sort_keys=True) + "\n"


def boxstats_from_dict(d: dict) -> BoxStats:
    return BoxStats(
        median=d["median"],
        q1=d["q1"],
        q3=d["q3"],
        whisker_low=d["whisker_low"],
        whisker_high=d["whisker_high"],
        outliers=tuple(d.get("outliers", ())),
        n=int(d["n"]),
    )


def format_cycles_csv(curves: Sequence[CycleCurves]) -> str:
    n_points = curves[0].curves.shape[1] if curves else 101
    header = ["candidate_id", "shoe", "side", "joint", "cycle"] + [f"p{k:03d}" for k in range(n_points)]
    lines = [",".join(header)]
    for c in curves:
        for i, curve in enumerate(c.curves):
            lines.append(",".join([c.candidate_id, c.shoe, c.side, c.joint, str(i)] + [fmt4(v) for v in curve]))
    return "\n".join(lines) + "\n"


def read_cycles_csv(path) -> list[CycleCurves]:
    grouped: dict = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            key = tuple(row[:4])
            grouped.setdefault(key, []).append([float(v) for v in row[5:]])
    return [CycleCurves(*key, np.array(rows)) for key, rows in grouped.items()]


def write_bundle(bundle: ReportBundle, out_dir, formats: Sequence[str] = FORMATS) -> list[Path]:
    """Write the requested formats into ``out_dir`` and return the written paths."""
    unknown = set(formats) - set(FORMATS)
    if unknown:
        raise ValueError(f"unknown output formats {sorted(unknown)}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    def emit(name: str, text: str):
        path = out_dir / name
        path.write_text(text, encoding="utf-8")
        written.append(path)

    if "table-text" in formats:
        emit("metrics_table.txt", format_table_text(bundle.rows))
    if "table-structured" in formats:
        emit("metrics.csv", format_table_csv(bundle.rows))
    if "boxstats-structured" in formats or "plot-svg" in formats:
        emit("boxstats.json", format_boxstats_json(bundle))
        if bundle.curves:
            emit("cycles.csv", format_cycles_csv(bundle.curves))
    if "plot-svg" in formats:
        written += plot_bundle(out_dir, out_dir)
    return written


# ---------------------------------------------------------------------------
# SVG


def _safe(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9]+", "_", name).strip("_") or "x"


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** np.floor(np.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = np.floor(lo / step) * step
    return [float(v) for v in np.arange(start, hi + 0.5 * step, step)]


def svg_boxplot(title: str, boxes: Sequence[tuple[str, BoxStats]], ylabel: str = "range (deg)") -> str:
    """
    One panel of side-by-side boxes.

    Each box is a ``<g class="box">`` element whose ``data-*`` attributes
    carry its statistics in data units, alongside the drawn geometry.
    """
    width, height = 120 + 90 * len(boxes), 320
    left, right, top, bottom = 60, 20, 40, 50
    values = [v for _, b in boxes for v in (b.whisker_low, b.whisker_high, *b.outliers)]
    lo, hi = (min(values), max(values)) if values else (0.0, 1.0)
    pad = 0.1 * (hi - lo) or 1.0
    ticks = _nice_ticks(lo - pad, hi + pad)
    y0, y1 = ticks[0], ticks[-1]

    def y(v: float) -> float:
        return top + (y1 - v) / (y1 - y0) * (height - top - bottom)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" data-ymin="{fmt4(y0)}" data-ymax="{fmt4(y1)}">',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{height - bottom}" stroke="black"/>',
        f'<text x="15" y="{height / 2:.1f}" transform="rotate(-90 15 {height / 2:.1f})" '
        f'text-anchor="middle" font-size="12">{ylabel}</text>',
    ]
    for t in ticks:
        out.append(f'<line x1="{left - 4}" y1="{y(t):.2f}" x2="{left}" y2="{y(t):.2f}" stroke="black"/>')
        out.append(f'<text x="{left - 6}" y="{y(t) + 4:.2f}" text-anchor="end" font-size="10">{t:g}</text>')
    for i, (label, b) in enumerate(boxes):
        cx = left + 45 + 90 * i
        out.append(
            f'<g class="box" data-label="{label}" data-median="{fmt4(b.median)}" data-q1="{fmt4(b.q1)}" '
            f'data-q3="{fmt4(b.q3)}" data-whisker-low="{fmt4(b.whisker_low)}" '
            f'data-whisker-high="{fmt4(b.whisker_high)}" data-n="{b.n}">'
        )
        out.append(f'<line x1="{cx}" y1="{y(b.whisker_low):.2f}" x2="{cx}" y2="{y(b.q1):.2f}" stroke="black"/>')
        out.append(f'<line x1="{cx}" y1="{y(b.q3):.2f}" x2="{cx}" y2="{y(b.whisker_high):.2f}" stroke="black"/>')
        for w in (b.whisker_low, b.whisker_high):
            out.append(f'<line x1="{cx - 12}" y1="{y(w):.2f}" x2="{cx + 12}" y2="{y(w):.2f}" stroke="black"/>')
        out.append(
            f'<rect x="{cx - 25}" y="{y(b.q3):.2f}" width="50" height="{y(b.q1) - y(b.q3):.2f}" '
            f'fill="#9ecae1" stroke="black"/>'
        )
        out.append(f'<line x1="{cx - 25}" y1="{y(b.median):.2f}" x2="{cx + 25}" y2="{y(b.median):.2f}" stroke="#d62728" stroke-width="2"/>')
        for o in b.outliers:
            out.append(f'<circle cx="{cx}" cy="{y(o):.2f}" r="3" fill="none" stroke="black" data-value="{fmt4(o)}"/>')
        out.append(f'<text x="{cx}" y="{height - bottom + 18}" text-anchor="middle" font-size="12">{label}</text>')
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def svg_cycles(title: str, curves: np.ndarray) -> str:
    """Overlay of cycles resampled to percent of gait cycle."""
    width, height = 480, 320
    left, right, top, bottom = 60, 20, 40, 50
    lo, hi = float(np.min(curves)), float(np.max(curves))
    pad = 0.05 * (hi - lo) or 1.0
    ticks = _nice_ticks(lo - pad, hi + pad)
    y0, y1 = ticks[0], ticks[-1]
    n = curves.shape[1]

    def x(k: int) -> float:
        return left + k / (n - 1) * (width - left - right)

    def y(v: float) -> float:
        return top + (y1 - v) / (y1 - y0) * (height - top - bottom)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{left}" y1="{height - bottom}" x2="{width - right}" y2="{height - bottom}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{height - bottom}" stroke="black"/>',
        f'<text x="{(left + width - right) / 2:.1f}" y="{height - 12}" text-anchor="middle" font-size="12">gait cycle (%)</text>',
    ]
    for t in ticks:
        out.append(f'<text x="{left - 6}" y="{y(t) + 4:.2f}" text-anchor="end" font-size="10">{t:g}</text>')
    for pct in (0, 25, 50, 75, 100):
        k = round(pct / 100 * (n - 1))
        out.append(f'<text x="{x(k):.2f}" y="{height - bottom + 14}" text-anchor="middle" font-size="10">{pct}</text>')
    for i, curve in enumerate(curves):
        pts = " ".join(f"{x(k):.2f},{y(v):.2f}" for k, v in enumerate(curve))
        out.append(f'<polyline class="cycle" data-cycle="{i}" points="{pts}" fill="none" stroke="#1f77b4" stroke-opacity="0.5"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def plot_bundle(bundle_dir, out_dir) -> list[Path]:
    """
    Render the SVG plots of a written bundle.

    One box-plot panel per (candidate, joint, group) and one cycle overlay
    per (candidate, shoe, side, joint). Groups with no data produce a
    warning, not an error.
    """
    bundle_dir, out_dir = Path(bundle_dir), Path(out_dir)
    tree = json.loads((bundle_dir / "boxstats.json").read_text(encoding="utf-8"))
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    definitions = tree.get("group_definitions", {})
    for candidate in sorted(set(tree.get("sessions", {})) - set(tree.get("groups", {}))):
        warnings.warn(f"{candidate}: no shoe group has two or more shoes", stacklevel=2)
    for candidate in sorted(tree.get("groups", {})):
        joints = tree["groups"][candidate]
        for joint in sorted(joints):
            for group in definitions:
                if group not in joints[joint]:
                    warnings.warn(f"{candidate} {joint}: no data for shoe group {group}", stacklevel=2)
                    continue
                shoes = joints[joint][group]
                boxes = [(s, boxstats_from_dict(shoes[s])) for s in sorted(shoes, key=_shoe_key)]
                path = out_dir / f"box_{_safe(candidate)}_{joint}_{group}.svg"
                path.write_text(svg_boxplot(f"{candidate} {joint} range, {group.replace('_', ' ')}", boxes), encoding="utf-8")
                written.append(path)
    cycles_path = bundle_dir / "cycles.csv"
    if cycles_path.is_file():
        for c in read_cycles_csv(cycles_path):
            path = out_dir / f"cycles_{_safe(c.candidate_id)}_{_safe(c.shoe)}_{c.side}_{c.joint}.svg"
            path.write_text(svg_cycles(f"{c.candidate_id} {c.shoe} {c.side} {c.joint}", c.curves), encoding="utf-8")
            written.append(path)
    return written
