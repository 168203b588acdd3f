"""Canonical polarity labels.

Index order doubles as the tie-break order everywhere: when two classes
score the same, the one with the lower index wins.
"""
from __future__ import annotations

from codemix.errors import ValidationError

LABELS = ("negative", "neutral", "positive")
LABEL_INDEX = {label: i for i, label in enumerate(LABELS)}


def label_to_index(label: str) -> int:
    try:
        return LABEL_INDEX[label.strip().lower()]
    except KeyError:
        raise ValidationError(f"unknown label {label!r}; expected one of {LABELS}") from None


def argmax(scores) -> int:
    """First index of the maximum, i.e. ties go to the earliest class."""
    best = 0
    for i in range(1, len(scores)):
        if scores[i] > scores[best]:
            best = i
    return best
