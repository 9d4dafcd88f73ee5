from dataclasses import asdict, dataclass
from typing import Any, Iterable, Mapping

from .response import Response

OPERATING_POINT = "single operating point (fixed decision thresholds)"


def _percent(num: int, den: int) -> float:
    return 100.0 * num / den if den > 0 else 0.0


@dataclass(frozen=True)
class ClassScore:
    """Event counts and precision/recall/F-score (percent) of one class."""

    label: str
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, label: str, tp: int, fp: int, fn: int) -> "ClassScore":
        precision = _percent(tp, tp + fp)
        recall = _percent(tp, tp + fn)
        if precision + recall > 0:
            f1 = 2.0 * precision * recall / (precision + recall)
        else:
            f1 = 0.0
        return cls(label=label, tp=tp, fp=fp, fn=fn,
                   precision=precision, recall=recall, f1=f1)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


class ScoreReport(Response):
    """
    A wrapper class of an event-based evaluation.

    This class contains:
    - status (str): Processing result status.
    - macro_f1 (float): Unweighted mean of class F-scores over the vocabulary.
    - macro_precision (float): Unweighted mean of class precisions.
    - macro_recall (float): Unweighted mean of class recalls.
    - class_scores (list[ClassScore]): One entry per vocabulary label.
    - metric (dict): Collar parameters used.
    - operating_point (str): Always a single fixed threshold.
    """

    def __init__(self, class_scores: list[ClassScore], metric: dict[str, Any],
                 status: str = "SUCCESS"):
        n = len(class_scores)
        super().__init__(
            status=status,
            macro_f1=sum(s.f1 for s in class_scores) / n if n else 0.0,
            macro_precision=sum(s.precision for s in class_scores) / n if n else 0.0,
            macro_recall=sum(s.recall for s in class_scores) / n if n else 0.0,
            class_scores=list(class_scores),
            metric=dict(metric),
            operating_point=OPERATING_POINT)

    @classmethod
    def from_counts(cls, counts: Mapping[str, tuple[int, int, int]],
                    vocabulary: Iterable[str], metric: dict[str, Any]) -> "ScoreReport":
        """Build from per-class (tp, fp, fn); labels with no counts score 0."""
        scores = [ClassScore.from_counts(label, *counts.get(label, (0, 0, 0)))
                  for label in vocabulary]
        return cls(scores, metric)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ScoreReport":
        scores = [ClassScore.from_counts(d["label"], int(d["tp"]), int(d["fp"]), int(d["fn"]))
                  for d in data["class_scores"]]
        return cls(scores, data.get("metric", {}), status=data.get("status", "SUCCESS"))

    @property
    def class_scores(self) -> list[ClassScore]:
        return self.get_value("class_scores")

    @property
    def macro_f1(self) -> float:
        return self.get_value("macro_f1")

    @property
    def macro_precision(self) -> float:
        return self.get_value("macro_precision")

    @property
    def macro_recall(self) -> float:
        return self.get_value("macro_recall")

    def counts(self) -> dict[str, tuple[int, int, int]]:
        return {s.label: (s.tp, s.fp, s.fn) for s in self.class_scores}

    def to_text(self) -> str:
        """Aligned plain-text table, one row per class plus the macro line."""
        width = max([len("class")] + [len(s.label) for s in self.class_scores])
        header = (f"{'class':<{width}}  {'TP':>5} {'FP':>5} {'FN':>5}"
                  f"  {'P (%)':>7} {'R (%)':>7} {'F (%)':>7}")
        lines = [header, "-" * len(header)]
        for s in self.class_scores:
            lines.append(f"{s.label:<{width}}  {s.tp:>5d} {s.fp:>5d} {s.fn:>5d}"
                         f"  {s.precision:>7.2f} {s.recall:>7.2f} {s.f1:>7.2f}")
        lines.append("-" * len(header))
        lines.append(f"{'macro':<{width}}  {'':>5} {'':>5} {'':>5}"
                     f"  {self.macro_precision:>7.2f} {self.macro_recall:>7.2f}"
                     f" {self.macro_f1:>7.2f}")
        lines.append(f"operating point: {self.get_value('operating_point')}")
        return "\n".join(lines) + "\n"
