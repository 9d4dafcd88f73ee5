"""
Comparison artifacts built from score reports and published score tables:
difference columns, grouped means, per-factor breakdowns, and the CSV/SVG
files they are exported as. CSV is the canonical output; the SVG charts are
plain markup with fixed number formatting, so reruns are byte-identical.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from bisect import bisect_right
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from enum import Enum
from os import PathLike
from pathlib import Path
from typing import Mapping, Sequence
from xml.sax.saxutils import escape

from pydantic import BaseModel, ConfigDict, model_validator

from errors import MetricError, SchemaError
from metric import (AnnotationSet, EventAnnotation, MetricConfig, filter_labels,
                    match_events)
from response import ScoreReport
from soundscape import ConditionTag, ReverbMode
from suites import SUITE_NAMES

logger = logging.getLogger("scbench.analysis")

SYSTEM_COLUMN = "system"
OFFICIAL_EVAL = "eval2020"
CONDITION_AGGREGATES = ("TNTSNR_inf", "TNTSNR_15", "TNTSNR_0",
                        "no_reverb", "short_reverb", "long_reverb")
KNOWN_SCORE_COLUMNS = frozenset((*SUITE_NAMES, OFFICIAL_EVAL, *CONDITION_AGGREGATES))
DEFAULT_DURATION_EDGES = (0.0, 1.0, 3.0, 5.0, 10.0)
LONG_EVENT_SECONDS = 5.0

Counts = dict[str, tuple[int, int, int]]


@dataclass(frozen=True)
class ScoreRow:
    system: str
    tags: dict[str, str] = field(default_factory=dict)
    scores: dict[str, float | None] = field(default_factory=dict)

    def score(self, column: str) -> float:
        value = self.scores.get(column)
        if value is None:
            raise SchemaError(f"system '{self.system}' has no score for '{column}'")
        return value


@dataclass(frozen=True)
class SystemScoreTable:
    """Macro F-scores (percent) per system and suite, plus free-form tags."""

    tag_names: tuple[str, ...]
    columns: tuple[str, ...]
    rows: tuple[ScoreRow, ...]

    def column(self, name: str) -> list[float]:
        return [row.score(name) for row in self.rows]

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow([SYSTEM_COLUMN, *self.tag_names, *self.columns])
        for row in self.rows:
            writer.writerow([row.system, *(row.tags.get(t, "") for t in self.tag_names),
                             *(_format_number(row.scores.get(c)) for c in self.columns)])
        return buffer.getvalue()


def _format_number(value: float | None) -> str:
    if value is None:
        return ""
    return repr(float(value))


def _parse_score(text: str, column: str, line_no: int, path) -> float | None:
    text = text.strip()
    if not text:
        return None
    try:
        value = float(text)
    except ValueError:
        raise SchemaError(f"{path}: line {line_no}: score '{text}' in column '{column}' "
                          f"is not a number") from None
    if not (0.0 <= value <= 100.0):
        raise SchemaError(f"{path}: line {line_no}: score {value} in column '{column}' "
                          f"outside [0, 100]")
    return value


def read_score_table(path: str | PathLike) -> SystemScoreTable:
    """Read a score table CSV.

    The header is `system` followed by any mix of tag and suite columns;
    columns named after a known suite (or `eval2020`, or a TNTSNR/reverb
    aggregate) hold scores, the others are tags. Lines starting with `#`
    are comments.
    """
    path = Path(path)
    if not path.is_file():
        raise SchemaError(f"missing score table: {path}")
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise SchemaError(f"{path}: unreadable score table ({e.strerror})") from None
    try:
        lines = raw.decode("utf-8").splitlines()
    except UnicodeDecodeError as e:
        line_no = raw.count(b"\n", 0, e.start) + 1
        raise SchemaError(f"{path}: line {line_no}: not valid UTF-8 text") from None
    numbered = [(n, line) for n, line in enumerate(lines, start=1)
                if line.strip() and not line.lstrip().startswith("#")]
    if not numbered:
        raise SchemaError(f"{path}: empty score table")

    rows_in = list(csv.reader(line for _, line in numbered))
    header = [h.strip() for h in rows_in[0]]
    if not header or header[0] != SYSTEM_COLUMN:
        raise SchemaError(f"{path}: first column must be '{SYSTEM_COLUMN}'")
    if len(set(header)) != len(header):
        raise SchemaError(f"{path}: duplicate column names")
    columns = tuple(h for h in header[1:] if h in KNOWN_SCORE_COLUMNS)
    tag_names = tuple(h for h in header[1:] if h not in KNOWN_SCORE_COLUMNS)
    if not columns:
        raise SchemaError(f"{path}: no suite columns (known: {sorted(KNOWN_SCORE_COLUMNS)})")

    rows = []
    for (line_no, _), cells in zip(numbered[1:], rows_in[1:]):
        if len(cells) != len(header):
            raise SchemaError(f"{path}: line {line_no}: expected {len(header)} fields, "
                              f"got {len(cells)}")
        record = dict(zip(header, cells))
        rows.append(ScoreRow(
            system=record[SYSTEM_COLUMN].strip(),
            tags={t: record[t].strip() for t in tag_names},
            scores={c: _parse_score(record[c], c, line_no, path) for c in columns}))
    logger.debug("Read %d systems x %d suites from %s", len(rows), len(columns), path)
    return SystemScoreTable(tag_names=tag_names, columns=columns, rows=tuple(rows))


def diff_table(table: SystemScoreTable, suite_a: str, suite_b: str) -> SystemScoreTable:
    """Append the column `suite_b - suite_a`, computed on the table's values.

    Inputs are the published (rounded) figures, so a difference can be off
    by 0.1 from one computed on unrounded scores.
    """
    for suite in (suite_a, suite_b):
        if suite not in table.columns:
            raise SchemaError(f"score table has no column '{suite}'")
    name = f"{suite_b}-{suite_a}"
    rows = []
    for row in table.rows:
        delta = (Decimal(repr(row.score(suite_b))) - Decimal(repr(row.score(suite_a))))
        rounded = float(delta.quantize(Decimal("0.1"), rounding=ROUND_HALF_UP))
        rows.append(ScoreRow(row.system, dict(row.tags), {**row.scores, name: rounded + 0.0}))
    return SystemScoreTable(tag_names=table.tag_names, columns=(*table.columns, name),
                            rows=tuple(rows))


def group_mean(table: SystemScoreTable, group_key: str | Sequence[str]) -> SystemScoreTable:
    """Unweighted mean score per suite over the rows sharing the tag value(s).

    One output row per group, in first-appearance order; its system name is
    the tag values joined with '/'.
    """
    keys = (group_key,) if isinstance(group_key, str) else tuple(group_key)
    missing = [k for k in keys if k not in table.tag_names]
    if missing:
        raise SchemaError(f"score table has no tag column {missing}")

    groups: dict[tuple[str, ...], list[ScoreRow]] = {}
    for row in table.rows:
        value = tuple(row.tags[k] for k in keys)
        if not all(value):
            raise SchemaError(f"system '{row.system}' has no value for tag {list(keys)}")
        groups.setdefault(value, []).append(row)

    rows = []
    for value, members in groups.items():
        means: dict[str, float | None] = {}
        for column in table.columns:
            scores = [r.scores[column] for r in members if r.scores.get(column) is not None]
            if not scores:
                raise SchemaError(f"empty group {'/'.join(value)} for '{column}'")
            means[column] = math.fsum(scores) / len(scores)
        rows.append(ScoreRow("/".join(value), dict(zip(keys, value)), means))
    return SystemScoreTable(tag_names=keys, columns=table.columns, rows=tuple(rows))


class Factor(str, Enum):
    ONSET_WINDOW = "onset-window"
    DURATION = "duration-bin"
    TNTSNR = "tntsnr"
    REVERB = "reverb"


class BreakdownSpec(BaseModel):
    """How events are partitioned for a breakdown.

    Duration bins are half-open [lo, hi) except the last, which includes its
    upper edge. Suite-level factors read each clip's bin from `clip_tags`.
    `min_duration` restricts the breakdown to reference events at least that
    long (e.g. long events only for the onset-window view).
    """

    model_config = ConfigDict(frozen=True)

    factor: Factor
    edges: tuple[float, ...] = DEFAULT_DURATION_EDGES
    clip_tags: dict[str, str] = {}
    min_duration: float | None = None

    @model_validator(mode="after")
    def _check(self) -> "BreakdownSpec":
        if len(self.edges) < 2:
            raise ValueError("need at least two bin edges")
        if any(b <= a for a, b in zip(self.edges, self.edges[1:])):
            raise ValueError("bin edges must be strictly increasing")
        return self

    @property
    def is_clip_level(self) -> bool:
        return self.factor is not Factor.DURATION

    def bin_labels(self) -> list[str]:
        if self.is_clip_level:
            return list(dict.fromkeys(self.clip_tags.values()))
        return [f"[{a:g},{b:g})" if k < len(self.edges) - 2 else f"[{a:g},{b:g}]"
                for k, (a, b) in enumerate(zip(self.edges, self.edges[1:]))]

    def duration_bin(self, seconds: float) -> str:
        edges = self.edges
        if seconds < edges[0] or seconds > edges[-1]:
            raise MetricError(f"event duration {seconds} s outside all bins {list(edges)}")
        k = min(bisect_right(edges, seconds) - 1, len(edges) - 2)
        return self.bin_labels()[k]

    def bin_of(self, event: EventAnnotation, clamp: bool = False) -> str | None:
        """Bin of an event by its own properties; None when filtered out.

        With `clamp`, durations past the last edge fall in the last bin.
        """
        if self.min_duration is not None and float(event.duration) < self.min_duration:
            return None
        if self.is_clip_level:
            if event.clip_id not in self.clip_tags:
                raise MetricError(f"clip '{event.clip_id}' has no {self.factor.value} tag")
            return self.clip_tags[event.clip_id]
        seconds = float(event.duration)
        if clamp:
            seconds = min(seconds, self.edges[-1])
        return self.duration_bin(seconds)


def _attribute_unmatched(est: EventAnnotation, refs: Sequence[EventAnnotation],
                         ref_bins: Sequence[str | None], spec: BreakdownSpec) -> str | None:
    same_class = [k for k, ref in enumerate(refs) if ref.label == est.label]
    if not same_class:
        return spec.bin_of(est, clamp=True)
    nearest = min(same_class, key=lambda k: (abs(refs[k].onset - est.onset), k))
    return ref_bins[nearest]


def breakdown_counts(reference: AnnotationSet, estimate: AnnotationSet, cfg: MetricConfig,
                     spec: BreakdownSpec, vocabulary: Sequence[str]) -> dict[str, Counts]:
    """Per-bin, per-class (tp, fp, fn).

    Matching is done once per clip; each reference event falls in the bin of
    its own factor value, a matched estimate follows its reference, and an
    unmatched estimate joins the bin of the nearest same-class reference
    onset in its clip. When the clip has none it joins its own duration bin,
    with durations past the last edge counted in the last bin. With no
    `min_duration` filter the bins sum to the global counts.
    """
    unknown = [c for c in estimate.roster if c not in reference]
    if unknown:
        raise MetricError(f"estimate references unknown clip '{unknown[0]}'")
    vocab = set(vocabulary)
    result: dict[str, Counts] = {label: {} for label in spec.bin_labels()}

    def bump(bin_label: str, label: str, tp: int = 0, fp: int = 0, fn: int = 0) -> None:
        counts = result.setdefault(bin_label, {})
        a, b, c = counts.get(label, (0, 0, 0))
        counts[label] = (a + tp, b + fp, c + fn)

    for clip_id in reference.roster:
        refs = filter_labels(reference.get(clip_id), vocab, cfg, "reference")
        ests = filter_labels(estimate.get(clip_id), vocab, cfg, "estimate")
        ref_bins = [spec.bin_of(ref) for ref in refs]
        pairs = match_events(refs, ests, cfg)
        matched_refs = {i for i, _ in pairs}
        matched_ests = {j for _, j in pairs}

        for i, _ in pairs:
            if ref_bins[i] is not None:
                bump(ref_bins[i], refs[i].label, tp=1)
        for i, ref in enumerate(refs):
            if i not in matched_refs and ref_bins[i] is not None:
                bump(ref_bins[i], ref.label, fn=1)
        for j, est in enumerate(ests):
            if j in matched_ests:
                continue
            bin_label = _attribute_unmatched(est, refs, ref_bins, spec)
            if bin_label is not None:
                bump(bin_label, est.label, fp=1)
    return result


def breakdown(reference: AnnotationSet, estimate: AnnotationSet, cfg: MetricConfig,
              spec: BreakdownSpec, vocabulary: Sequence[str]) -> dict[str, ScoreReport]:
    """One ScoreReport per bin, bins in order."""
    return {bin_label: ScoreReport.from_counts(counts, vocabulary, cfg.describe())
            for bin_label, counts in
            breakdown_counts(reference, estimate, cfg, spec, vocabulary).items()}


def condition_breakdown(reports: Mapping[str, ScoreReport]) -> dict[str, dict[str, float]]:
    """Macro F per TNTSNR level without reverberation, and per reverberation
    mode without non-target events, from grid-cell reports keyed by suite name.

    `ref` stands in for the (inf, no reverberation) cell when that cell is
    absent.
    """
    def cell(tntsnr: float | None, reverb: ReverbMode) -> float:
        condition = ConditionTag(tntsnr_db=tntsnr, reverb=reverb)
        name = condition.suite_name
        if name in reports:
            return reports[name].macro_f1
        if condition.is_reference and "ref" in reports:
            return reports["ref"].macro_f1
        raise SchemaError(f"no report for grid cell '{name}'")

    tntsnr = {f"TNTSNR_{ConditionTag(tntsnr_db=t).tntsnr_label}": cell(t, ReverbMode.NONE)
              for t in (None, 15.0, 0.0)}
    reverb = {f"{mode.suite_label}_reverb": cell(None, mode) for mode in ReverbMode}
    return {"tntsnr": tntsnr, "reverb": reverb}


def series_csv(series: Mapping[str, float], key_name: str, value_name: str) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow([key_name, value_name])
    for key, value in series.items():
        writer.writerow([key, _format_number(value)])
    return buffer.getvalue()


def breakdown_csv(reports: Mapping[str, ScoreReport]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["bin", "tp", "fp", "fn", "precision", "recall", "f1"])
    for bin_label, report in reports.items():
        tp, fp, fn = (sum(c[k] for c in report.counts().values()) for k in range(3))
        writer.writerow([bin_label, tp, fp, fn, _format_number(report.macro_precision),
                         _format_number(report.macro_recall), _format_number(report.macro_f1)])
    return buffer.getvalue()


def precision_recall_csv(reports: Mapping[str, ScoreReport]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["system", "precision", "recall"])
    for system, report in reports.items():
        writer.writerow([system, _format_number(report.macro_precision),
                         _format_number(report.macro_recall)])
    return buffer.getvalue()


def read_precision_recall_csv(path: str | PathLike) -> dict[str, tuple[float, float]]:
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != ["system", "precision", "recall"]:
            raise SchemaError(f"{path}: expected columns system,precision,recall")
        return {r["system"]: (float(r["precision"]), float(r["recall"])) for r in reader}


# Chart geometry, in SVG user units.
_WIDTH, _HEIGHT, _MARGIN = 480, 360, 48


def _svg_frame(title: str, x_label: str, y_label: str) -> list[str]:
    plot_w, plot_h = _WIDTH - 2 * _MARGIN, _HEIGHT - 2 * _MARGIN
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" height="{_HEIGHT}" '
        f'viewBox="0 0 {_WIDTH} {_HEIGHT}" font-family="sans-serif" font-size="10">',
        f'<text x="{_WIDTH / 2:.1f}" y="20" text-anchor="middle" font-size="12">'
        f'{escape(title)}</text>',
        f'<line x1="{_MARGIN}" y1="{_MARGIN + plot_h}" x2="{_MARGIN + plot_w}" '
        f'y2="{_MARGIN + plot_h}" stroke="black"/>',
        f'<line x1="{_MARGIN}" y1="{_MARGIN}" x2="{_MARGIN}" y2="{_MARGIN + plot_h}" '
        f'stroke="black"/>',
        f'<text x="{_WIDTH / 2:.1f}" y="{_HEIGHT - 8}" text-anchor="middle">'
        f'{escape(x_label)}</text>',
        f'<text x="12" y="{_HEIGHT / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 12 {_HEIGHT / 2:.1f})">{escape(y_label)}</text>',
    ]
    for tick in range(0, 101, 20):
        y = _MARGIN + plot_h * (1 - tick / 100)
        parts.append(f'<text x="{_MARGIN - 4}" y="{y + 3:.1f}" text-anchor="end">{tick}</text>')
    return parts


def scatter_svg(points: Mapping[str, tuple[float, float]], title: str,
                x_label: str, y_label: str) -> str:
    """Labelled points on fixed [0, 100] x [0, 100] axes."""
    plot_w, plot_h = _WIDTH - 2 * _MARGIN, _HEIGHT - 2 * _MARGIN
    parts = _svg_frame(title, x_label, y_label)
    for tick in range(0, 101, 20):
        x = _MARGIN + plot_w * tick / 100
        parts.append(f'<text x="{x:.1f}" y="{_MARGIN + plot_h + 14}" '
                     f'text-anchor="middle">{tick}</text>')
    for name, (x_value, y_value) in points.items():
        x = _MARGIN + plot_w * x_value / 100
        y = _MARGIN + plot_h * (1 - y_value / 100)
        parts.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="3" fill="black"/>')
        parts.append(f'<text x="{x + 5:.2f}" y="{y - 5:.2f}">{escape(name)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def bar_svg(series: Mapping[str, float], title: str, x_label: str,
            y_label: str = "F-score (%)") -> str:
    """One bar per key on a [0, 100] value axis."""
    plot_w, plot_h = _WIDTH - 2 * _MARGIN, _HEIGHT - 2 * _MARGIN
    parts = _svg_frame(title, x_label, y_label)
    slot = plot_w / max(len(series), 1)
    for k, (name, value) in enumerate(series.items()):
        height = plot_h * min(max(value, 0.0), 100.0) / 100
        x = _MARGIN + slot * k + slot * 0.15
        parts.append(f'<rect x="{x:.2f}" y="{_MARGIN + plot_h - height:.2f}" '
                     f'width="{slot * 0.7:.2f}" height="{height:.2f}" fill="grey"/>')
        parts.append(f'<text x="{x + slot * 0.35:.2f}" y="{_MARGIN + plot_h + 14}" '
                     f'text-anchor="middle">{escape(name)}</text>')
        parts.append(f'<text x="{x + slot * 0.35:.2f}" y="{_MARGIN + plot_h - height - 3:.2f}" '
                     f'text-anchor="middle">{value:.1f}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(text)
    return path


def precision_recall_export(reports: Mapping[str, ScoreReport], out_dir: str | PathLike,
                            stem: str = "precision_recall") -> tuple[Path, Path]:
    """Write one (macro precision, macro recall) point per system as CSV and SVG."""
    if not reports:
        raise SchemaError("precision/recall export needs at least one report")
    out_dir = Path(out_dir)
    points = {name: (r.macro_precision, r.macro_recall) for name, r in reports.items()}
    csv_path = _write(out_dir / f"{stem}.csv", precision_recall_csv(reports))
    svg_path = _write(out_dir / f"{stem}.svg",
                      scatter_svg(points, "Precision and recall", "precision (%)", "recall (%)"))
    return csv_path, svg_path


def export_table(table: SystemScoreTable, out_dir: str | PathLike, stem: str) -> Path:
    return _write(Path(out_dir) / f"{stem}.csv", table.to_csv())


def export_series(series: Mapping[str, float], out_dir: str | PathLike, stem: str,
                  title: str, key_name: str) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    csv_path = _write(out_dir / f"{stem}.csv", series_csv(series, key_name, "f1"))
    svg_path = _write(out_dir / f"{stem}.svg", bar_svg(series, title, key_name))
    return csv_path, svg_path


def export_breakdown(reports: Mapping[str, ScoreReport], out_dir: str | PathLike,
                     factor: Factor) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    stem = f"breakdown_{factor.value}"
    csv_path = _write(out_dir / f"{stem}.csv", breakdown_csv(reports))
    series = {name: r.macro_f1 for name, r in reports.items()}
    svg_path = _write(out_dir / f"{stem}.svg",
                      bar_svg(series, f"F-score by {factor.value}", factor.value))
    return csv_path, svg_path

