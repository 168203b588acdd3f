"""Confusion-matrix metrics over the fixed three-class label set.

Undefined precision/recall/F1 (zero denominator) count as 0, and all three
classes always take part in macro averages, even when absent from both
gold and predictions. On tiny samples this pulls macro-F1 down.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from codemix.errors import ValidationError
from codemix.labels import LABELS, label_to_index


def _index(label) -> int:
    if isinstance(label, (int, np.integer)):
        if not 0 <= label < len(LABELS):
            raise ValidationError(f"label index {label} out of range")
        return int(label)
    return label_to_index(label)


def confusion(gold: Sequence, pred: Sequence) -> np.ndarray:
    """3x3 counts, rows = gold, columns = predicted."""
    if len(gold) != len(pred):
        raise ValidationError(f"length mismatch: {len(gold)} gold vs {len(pred)} predicted")
    if not gold:
        raise ValidationError("cannot evaluate an empty sequence")
    m = np.zeros((len(LABELS), len(LABELS)), dtype=np.int64)
    for g, p in zip(gold, pred):
        m[_index(g), _index(p)] += 1
    return m


def _safe_div(num: float, den: float) -> float:
    return num / den if den else 0.0


@dataclass
class ClassScores:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class MetricsReport:
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    weighted_f1: float
    per_class: dict[str, ClassScores]
    total: int

    def to_dict(self) -> dict:
        return asdict(self)

    def format(self) -> str:
        lines = [f"{'class':<10}{'precision':>11}{'recall':>9}{'f1':>9}{'support':>9}"]
        for name, c in self.per_class.items():
            lines.append(f"{name:<10}{c.precision:>11.4f}{c.recall:>9.4f}{c.f1:>9.4f}{c.support:>9d}")
        lines += [
            "",
            f"accuracy         {self.accuracy:.4f}",
            f"macro precision  {self.macro_precision:.4f}",
            f"macro recall     {self.macro_recall:.4f}",
            f"macro F1         {self.macro_f1:.4f}",
            f"weighted F1      {self.weighted_f1:.4f}",
            f"examples         {self.total}",
        ]
        return "\n".join(lines)


def report(matrix) -> MetricsReport:
    m = np.asarray(matrix)
    if m.shape != (len(LABELS), len(LABELS)):
        raise ValidationError(f"confusion matrix must be {len(LABELS)}x{len(LABELS)}")
    total = int(m.sum())
    if total == 0:
        raise ValidationError("confusion matrix is empty")
    per_class = {}
    for k, name in enumerate(LABELS):
        tp = int(m[k, k])
        fp = int(m[:, k].sum()) - tp
        fn = int(m[k, :].sum()) - tp
        p = _safe_div(tp, tp + fp)
        r = _safe_div(tp, tp + fn)
        per_class[name] = ClassScores(p, r, _safe_div(2 * p * r, p + r), tp + fn)
    scores = list(per_class.values())
    return MetricsReport(
        accuracy=int(np.trace(m)) / total,
        macro_precision=sum(c.precision for c in scores) / len(scores),
        macro_recall=sum(c.recall for c in scores) / len(scores),
        macro_f1=sum(c.f1 for c in scores) / len(scores),
        weighted_f1=sum(c.support * c.f1 for c in scores) / total,
        per_class=per_class,
        total=total,
    )


def evaluate(gold: Sequence, pred: Sequence) -> MetricsReport:
    return report(confusion(gold, pred))
