"""Confusion matrices and classification metrics, with "relevant" as positive.

Degenerate ratios (0/0) are defined as 0. Display helpers round percentages to
one decimal place and F1 to three, the precision used in the result tables.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .corpus import Label
from .errors import InputError


@dataclass(frozen=True)
class ConfusionMatrix:
    true_negative: int
    false_positive: int
    false_negative: int
    true_positive: int

    def __post_init__(self) -> None:
        for name in ("true_negative", "false_positive", "false_negative", "true_positive"):
            if getattr(self, name) < 0:
                raise InputError(f"confusion matrix cell {name} must be >= 0")

    @property
    def total(self) -> int:
        return self.true_negative + self.false_positive + self.false_negative + self.true_positive


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    matrix: ConfusionMatrix

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "confusion": {
                "true_negative": self.matrix.true_negative,
                "false_positive": self.matrix.false_positive,
                "false_negative": self.matrix.false_negative,
                "true_positive": self.matrix.true_positive,
            },
        }


def confusion(predictions: Sequence[Label], truths: Sequence[Label]) -> ConfusionMatrix:
    """Tally predictions against truths; lengths must match."""
    if len(predictions) != len(truths):
        raise InputError(
            f"predictions ({len(predictions)}) and truths ({len(truths)}) differ in length"
        )
    tn = fp = fn = tp = 0
    for pred, truth in zip(predictions, truths):
        if truth == Label.RELEVANT:
            if pred == Label.RELEVANT:
                tp += 1
            else:
                fn += 1
        else:
            if pred == Label.RELEVANT:
                fp += 1
            else:
                tn += 1
    return ConfusionMatrix(
        true_negative=tn, false_positive=fp, false_negative=fn, true_positive=tp
    )


def _ratio(numerator: int, denominator: int) -> float:
    return numerator / denominator if denominator else 0.0


def metrics(matrix: ConfusionMatrix) -> MetricsReport:
    """Accuracy, precision, recall, and harmonic-mean F1 from a confusion matrix."""
    if matrix.total == 0:
        raise InputError("cannot compute metrics over an empty confusion matrix")
    accuracy = (matrix.true_positive + matrix.true_negative) / matrix.total
    precision = _ratio(matrix.true_positive, matrix.true_positive + matrix.false_positive)
    recall = _ratio(matrix.true_positive, matrix.true_positive + matrix.false_negative)
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return MetricsReport(
        accuracy=accuracy, precision=precision, recall=recall, f1=f1, matrix=matrix
    )


def format_percent(value: float) -> str:
    return f"{value * 100:.1f}%"


def format_f1(value: float) -> str:
    return f"{value:.3f}"


def format_report_line(name: str, report: MetricsReport, name_width: int = 20) -> str:
    return (
        f"{name:<{name_width}} "
        f"{format_percent(report.accuracy):>9} "
        f"{format_percent(report.precision):>10} "
        f"{format_percent(report.recall):>9} "
        f"{format_f1(report.f1):>7}"
    )


def format_metrics_table(rows: Sequence[tuple[str, MetricsReport]]) -> str:
    """Plain-text table with one row per (name, report), result-table layout."""
    name_width = max([len(name) for name, _ in rows] + [len("Training data")])
    header = (
        f"{'Training data':<{name_width}} {'Accuracy':>9} {'Precision':>10} "
        f"{'Recall':>9} {'F1':>7}"
    )
    lines = [header, "-" * len(header)]
    lines.extend(format_report_line(name, report, name_width) for name, report in rows)
    return "\n".join(lines)
