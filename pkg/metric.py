"""
Event-based F-score with onset/offset collars.

A predicted event matches a reference event of the same class when its
onset lies within the onset collar (200 ms) and its offset within the
offset collar (the larger of 200 ms and 20 % of the reference duration).
Matching is a maximum-cardinality bipartite matching per clip and class,
so counts do not depend on event order. Times are exact decimals parsed
from the annotation text, which keeps collar boundaries deterministic.
"""
from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from os import PathLike
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from errors import AnnotationParseError, MetricError
from response import ScoreReport

logger = logging.getLogger("scbench.metric")

HEADER = ("filename", "onset", "offset", "event_label")


def to_decimal(value: Decimal | str | float | int) -> Decimal:
    if isinstance(value, Decimal):
        return value
    if isinstance(value, float):
        return Decimal(repr(value))
    return Decimal(value)


@dataclass(frozen=True)
class EventAnnotation:
    clip_id: str
    label: str
    onset: Decimal
    offset: Decimal

    def __post_init__(self):
        onset = to_decimal(self.onset)
        offset = to_decimal(self.offset)
        object.__setattr__(self, "onset", onset)
        object.__setattr__(self, "offset", offset)
        if not (onset.is_finite() and offset.is_finite()):
            raise ValueError("onset and offset must be finite")
        if onset < 0 or onset >= offset:
            raise ValueError(f"need 0 <= onset < offset, got [{onset}, {offset}]")

    @classmethod
    def from_seconds(cls, clip_id: str, label: str, onset: float,
                     offset: float) -> "EventAnnotation":
        """Annotation at millisecond resolution, as written to annotation files."""
        return cls(clip_id, label, Decimal(f"{onset:.3f}"), Decimal(f"{offset:.3f}"))

    @property
    def duration(self) -> Decimal:
        return self.offset - self.onset

    def sort_key(self) -> tuple:
        return (self.onset, self.offset, self.label)


class AnnotationSet:
    """Strong labels grouped by clip, with an explicit clip roster.

    The roster keeps clips without events, which still count in evaluation.
    """

    def __init__(self, annotations: Iterable[EventAnnotation] = (),
                 roster: Iterable[str] | None = None):
        events: dict[str, list[EventAnnotation]] = {}
        if roster is not None:
            for clip_id in roster:
                events.setdefault(clip_id, [])
        for annotation in annotations:
            if roster is not None and annotation.clip_id not in events:
                raise MetricError(f"annotation references unknown clip '{annotation.clip_id}'")
            events.setdefault(annotation.clip_id, []).append(annotation)
        for clip_events in events.values():
            clip_events.sort(key=EventAnnotation.sort_key)
        self._events = events

    @property
    def roster(self) -> list[str]:
        return list(self._events)

    def get(self, clip_id: str) -> list[EventAnnotation]:
        return self._events.get(clip_id, [])

    def __contains__(self, clip_id: str) -> bool:
        return clip_id in self._events

    def __len__(self) -> int:
        return sum(len(v) for v in self._events.values())

    def __iter__(self):
        for clip_events in self._events.values():
            yield from clip_events

    def __eq__(self, other) -> bool:
        return isinstance(other, AnnotationSet) and self._events == other._events

    def union(self, other: "AnnotationSet") -> "AnnotationSet":
        overlap = set(self.roster) & set(other.roster)
        if overlap:
            raise MetricError(f"clip sets overlap: {sorted(overlap)[:5]}")
        return AnnotationSet(list(self) + list(other), self.roster + other.roster)

    def prefixed(self, prefix: str) -> "AnnotationSet":
        """Copy with every clip id prefixed, for pooling several suites."""
        return AnnotationSet(
            [EventAnnotation(f"{prefix}{a.clip_id}", a.label, a.onset, a.offset) for a in self],
            [f"{prefix}{c}" for c in self.roster])


class MetricConfig(BaseModel):
    """Collar parameters, in seconds (exact decimals)."""

    model_config = ConfigDict(frozen=True)

    onset_collar: Decimal = Decimal("0.200")
    offset_collar_min: Decimal = Decimal("0.200")
    offset_collar_pct: Decimal = Decimal("0.20")
    ignore_unknown_labels: bool = False

    @field_validator("onset_collar", "offset_collar_min", "offset_collar_pct", mode="before")
    @classmethod
    def _exact(cls, v):
        return to_decimal(v)

    @model_validator(mode="after")
    def _ranges(self) -> "MetricConfig":
        if min(self.onset_collar, self.offset_collar_min, self.offset_collar_pct) <= 0:
            raise ValueError("collars must be > 0")
        if self.offset_collar_pct >= 1:
            raise ValueError("offset_collar_pct must be < 1")
        return self

    def describe(self) -> dict[str, str]:
        return {"onset_collar": str(self.onset_collar),
                "offset_collar_min": str(self.offset_collar_min),
                "offset_collar_pct": str(self.offset_collar_pct)}


def offset_collar(ref: EventAnnotation, cfg: MetricConfig) -> Decimal:
    return max(cfg.offset_collar_min, cfg.offset_collar_pct * ref.duration)


def is_valid_pair(ref: EventAnnotation, est: EventAnnotation, cfg: MetricConfig) -> bool:
    return (ref.label == est.label
            and abs(ref.onset - est.onset) <= cfg.onset_collar
            and abs(ref.offset - est.offset) <= offset_collar(ref, cfg))


def _maximum_matching(adjacency: Sequence[Sequence[int]], n_right: int) -> list[tuple[int, int]]:
    """Maximum-cardinality bipartite matching (Hopcroft-Karp).

    `adjacency[left]` lists the right vertices `left` may pair with.
    Returns (left, right) pairs.
    """
    rows = [left for left, rights in enumerate(adjacency) for _ in rights]
    if not rows:
        return []
    cols = [right for rights in adjacency for right in rights]
    graph = csr_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)),
                       shape=(len(adjacency), n_right))
    match = maximum_bipartite_matching(graph, perm_type="column")
    return [(left, int(right)) for left, right in enumerate(match) if right >= 0]


def match_events(refs: Sequence[EventAnnotation], ests: Sequence[EventAnnotation],
                 cfg: MetricConfig) -> list[tuple[int, int]]:
    """Matched (ref index, est index) pairs for one clip, maximised per class."""
    by_class_ref: dict[str, list[int]] = defaultdict(list)
    by_class_est: dict[str, list[int]] = defaultdict(list)
    for i, ref in enumerate(refs):
        by_class_ref[ref.label].append(i)
    for j, est in enumerate(ests):
        by_class_est[est.label].append(j)

    pairs = []
    for label in sorted(by_class_ref):
        ref_idx = by_class_ref[label]
        est_idx = by_class_est.get(label, [])
        if not est_idx:
            continue
        adjacency = [[k for k, j in enumerate(est_idx) if is_valid_pair(refs[i], ests[j], cfg)]
                     for i in ref_idx]
        for left, right in _maximum_matching(adjacency, len(est_idx)):
            pairs.append((ref_idx[left], est_idx[right]))
    return sorted(pairs)


def count_matches(refs: Sequence[EventAnnotation], ests: Sequence[EventAnnotation],
                  cfg: MetricConfig) -> dict[str, tuple[int, int, int]]:
    """Per-class (tp, fp, fn) for one clip."""
    matched = match_events(refs, ests, cfg)
    tp: dict[str, int] = defaultdict(int)
    n_ref: dict[str, int] = defaultdict(int)
    n_est: dict[str, int] = defaultdict(int)
    for i, _ in matched:
        tp[refs[i].label] += 1
    for ref in refs:
        n_ref[ref.label] += 1
    for est in ests:
        n_est[est.label] += 1
    return {label: (tp[label], n_est[label] - tp[label], n_ref[label] - tp[label])
            for label in set(n_ref) | set(n_est)}


def add_counts(total: dict[str, tuple[int, int, int]],
               counts: Mapping[str, tuple[int, int, int]]) -> None:
    for label, (tp, fp, fn) in counts.items():
        a, b, c = total.get(label, (0, 0, 0))
        total[label] = (a + tp, b + fp, c + fn)


def filter_labels(annotations: list[EventAnnotation], vocabulary: set[str],
                   cfg: MetricConfig, what: str) -> list[EventAnnotation]:
    unknown = [a for a in annotations if a.label not in vocabulary]
    if not unknown:
        return annotations
    if not cfg.ignore_unknown_labels:
        raise MetricError(
            f"{what} label outside vocabulary: '{unknown[0].label}' in clip '{unknown[0].clip_id}'")
    logger.warning("Ignoring %d %s events with labels outside the vocabulary", len(unknown), what)
    return [a for a in annotations if a.label in vocabulary]


def evaluate_counts(reference: AnnotationSet, estimate: AnnotationSet, cfg: MetricConfig,
                    vocabulary: Sequence[str]) -> dict[str, tuple[int, int, int]]:
    """Per-class (tp, fp, fn) accumulated over the reference roster."""
    unknown = [c for c in estimate.roster if c not in reference]
    if unknown:
        raise MetricError(f"estimate references unknown clip '{unknown[0]}'")

    vocab = set(vocabulary)
    total: dict[str, tuple[int, int, int]] = {}
    for clip_id in reference.roster:
        refs = filter_labels(reference.get(clip_id), vocab, cfg, "reference")
        ests = filter_labels(estimate.get(clip_id), vocab, cfg, "estimate")
        add_counts(total, count_matches(refs, ests, cfg))
    return total


def evaluate(reference: AnnotationSet, estimate: AnnotationSet, cfg: MetricConfig,
             vocabulary: Sequence[str]) -> ScoreReport:
    """Collar-based event F-score at a single operating point, macro-averaged."""
    counts = evaluate_counts(reference, estimate, cfg, vocabulary)
    return ScoreReport.from_counts(counts, vocabulary, cfg.describe())


def _parse_time(text: str, path, line_no: int) -> Decimal:
    try:
        value = Decimal(text)
    except InvalidOperation:
        raise AnnotationParseError(f"invalid time '{text}'", path, line_no) from None
    if not value.is_finite():
        raise AnnotationParseError(f"invalid time '{text}'", path, line_no)
    return value


def _read_lines(path: str | PathLike) -> list[str]:
    try:
        raw = Path(path).read_bytes()
    except FileNotFoundError:
        raise AnnotationParseError("missing annotation file", path) from None
    except OSError as e:
        raise AnnotationParseError(f"unreadable annotation file ({e.strerror})", path) from None
    try:
        return raw.decode("utf-8").splitlines()
    except UnicodeDecodeError as e:
        line_no = raw.count(b"\n", 0, e.start) + 1
        raise AnnotationParseError("not valid UTF-8 text", path, line_no) from None


def read_annotations(path: str | PathLike,
                     roster: Iterable[str] | None = None) -> AnnotationSet:
    """Parse a tab-separated annotation file.

    Rows are `clip_id<TAB>onset<TAB>offset<TAB>label`; a row holding only a
    clip id (or with empty onset/offset/label) declares an event-free clip.
    An optional `filename onset offset event_label` header is skipped.
    """
    annotations: list[EventAnnotation] = []
    seen: dict[str, None] = {}
    lines = _read_lines(path)

    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if tuple(f.strip() for f in fields) == HEADER:
            continue
        if len(fields) == 1 or (len(fields) == 4 and not any(f.strip() for f in fields[1:])):
            seen.setdefault(fields[0].strip(), None)
            continue
        if len(fields) != 4:
            raise AnnotationParseError(
                f"expected 4 tab-separated fields, got {len(fields)}", path, line_no)

        clip_id, onset, offset, label = (f.strip() for f in fields)
        if not clip_id or not label:
            raise AnnotationParseError("empty clip id or label", path, line_no)
        try:
            annotation = EventAnnotation(clip_id, label,
                                         _parse_time(onset, path, line_no),
                                         _parse_time(offset, path, line_no))
        except ValueError as e:
            raise AnnotationParseError(str(e), path, line_no) from None
        seen.setdefault(clip_id, None)
        annotations.append(annotation)

    if roster is None:
        return AnnotationSet(annotations, list(seen))
    roster = list(roster)
    known = set(roster)
    extra = [c for c in seen if c not in known]
    if extra:
        raise AnnotationParseError(f"unknown clip '{extra[0]}'", path)
    return AnnotationSet(annotations, roster)


def write_annotations(path: str | PathLike, annotations: AnnotationSet) -> None:
    """Write the tab-separated format read by `read_annotations` (3-decimal seconds)."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\t".join(HEADER) + "\n")
        for clip_id in annotations.roster:
            clip_events = annotations.get(clip_id)
            if not clip_events:
                f.write(f"{clip_id}\n")
            for a in clip_events:
                f.write(f"{a.clip_id}\t{a.onset:.3f}\t{a.offset:.3f}\t{a.label}\n")
