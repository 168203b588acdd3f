"""Combining prediction tables from several models.

Any model (including ones trained elsewhere) joins through a CSV with
header ``id,p_negative,p_neutral,p_positive``. Two combiners are offered:
a confidence-weighted majority vote, and a logistic "funnel" stacked on
the concatenated probability triples.
"""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.special import expit

from codemix.errors import ValidationError
from codemix.fileio import atomic_write
from codemix.labels import LABELS, argmax, label_to_index
from codemix.nbsvm import train_binary

HEADER = ["id", "p_negative", "p_neutral", "p_positive"]
SUM_TOLERANCE = 1e-6
FUNNEL_FORMAT = "codemix-funnel/1"


@dataclass(frozen=True)
class PredictionRecord:
    example_id: str
    probs: tuple[float, float, float]

    @property
    def predicted(self) -> str:
        return LABELS[argmax(self.probs)]

    @property
    def confidence(self) -> float:
        return max(self.probs)


@dataclass
class PredictionTable:
    model_name: str
    records: dict[str, PredictionRecord]

    def __len__(self):
        return len(self.records)

    def get(self, example_id: str) -> PredictionRecord:
        try:
            return self.records[example_id]
        except KeyError:
            raise ValidationError(f"model {self.model_name!r} has no prediction for id {example_id!r}") from None

    @classmethod
    def from_rows(cls, model_name: str, rows) -> PredictionTable:
        records = {}
        for example_id, probs in rows:
            if example_id in records:
                raise ValidationError(f"duplicate id {example_id!r} in {model_name!r}")
            records[example_id] = PredictionRecord(example_id, tuple(float(p) for p in probs))
        return cls(model_name, records)


def _check_probs(probs: Sequence[float], where: str) -> None:
    if any(not math.isfinite(p) or p < 0 or p > 1 for p in probs):
        raise ValidationError(f"{where}: probabilities must lie in [0, 1], got {list(probs)}")
    total = sum(probs)
    if abs(total - 1.0) > SUM_TOLERANCE:
        raise ValidationError(f"{where}: probabilities sum to {total:.6g}, expected 1")


def load_predictions(path, model_name: str | None = None) -> PredictionTable:
    path = Path(path)
    name = model_name or path.stem
    records: dict[str, PredictionRecord] = {}
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != HEADER:
            raise ValidationError(f"{path}:1: expected header {','.join(HEADER)}")
        for row in reader:
            lineno = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise ValidationError(f"{path}:{lineno}: expected 4 columns, got {len(row)}")
            example_id = row[0].strip()
            if not example_id:
                raise ValidationError(f"{path}:{lineno}: empty id")
            try:
                probs = tuple(float(c) for c in row[1:])
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: non-numeric probability") from None
            _check_probs(probs, f"{path}:{lineno}")
            if example_id in records:
                raise ValidationError(f"{path}:{lineno}: duplicate id {example_id!r}")
            records[example_id] = PredictionRecord(example_id, probs)
    if not records:
        warnings.warn(f"{path}: prediction file has no rows", stacklevel=2)
    return PredictionTable(name, records)


def write_predictions(path, rows) -> None:
    """``rows`` are ``(id, probs)`` pairs; floats are written round-trip exact."""
    with atomic_write(path) as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(HEADER)
        for example_id, probs in rows:
            writer.writerow([example_id, *(repr(float(p)) for p in probs)])


def vote_scores(tables: Sequence[PredictionTable], example_id: str) -> np.ndarray:
    """Per-class sum of confidences of the models whose argmax is that class."""
    if not tables:
        raise ValidationError("weighted vote needs at least one model")
    scores = np.zeros(len(LABELS))
    for table in tables:
        rec = table.get(example_id)
        scores[argmax(rec.probs)] += rec.confidence
    return scores


def weighted_vote(tables: Sequence[PredictionTable], example_id: str) -> str:
    return LABELS[argmax(vote_scores(tables, example_id))]


def common_ids(tables: Sequence[PredictionTable]) -> list[str]:
    """Ids of the first table (in file order) after checking every table covers the same set."""
    if not tables:
        raise ValidationError("no prediction tables given")
    ids = list(tables[0].records)
    ref = set(ids)
    for table in tables[1:]:
        other = set(table.records)
        if other != ref:
            missing = sorted(ref - other)[:10]
            extra = sorted(other - ref)[:10]
            raise ValidationError(
                f"model {table.model_name!r} covers a different id set "
                f"(missing {missing}, extra {extra}) than {tables[0].model_name!r}"
            )
    return ids


def funnel_features(tables: Sequence[PredictionTable], example_id: str) -> np.ndarray:
    return np.concatenate([np.asarray(t.get(example_id).probs, dtype=np.float64) for t in tables])


@dataclass
class FunnelModel:
    model_names: list[str]
    weights: np.ndarray  # (3, 3K)
    biases: np.ndarray  # (3,)
    C: float = 1.0

    def __post_init__(self):
        if self.weights.shape != (len(LABELS), len(LABELS) * len(self.model_names)):
            raise ValidationError("funnel weights do not match 3 x 3K for the declared models")

    def order(self, tables: Sequence[PredictionTable]) -> list[PredictionTable]:
        """Arrange ``tables`` in training order; the set of names must match exactly."""
        by_name = {t.model_name: t for t in tables}
        if len(by_name) != len(tables):
            raise ValidationError("prediction tables must have distinct model names")
        missing = [n for n in self.model_names if n not in by_name]
        extra = sorted(set(by_name) - set(self.model_names))
        if missing or extra:
            raise ValidationError(f"funnel expects models {self.model_names}; missing {missing}, unexpected {extra}")
        return [by_name[n] for n in self.model_names]

    def proba(self, features: np.ndarray) -> np.ndarray:
        features = np.atleast_2d(features)
        s = expit(features @ self.weights.T + self.biases)
        return s / s.sum(axis=1, keepdims=True)

    def save(self, path) -> None:
        doc = {
            "format": FUNNEL_FORMAT,
            "model_names": self.model_names,
            "C": self.C,
            "labels": list(LABELS),
            "weights": self.weights.tolist(),
            "biases": self.biases.tolist(),
        }
        with atomic_write(path) as f:
            json.dump(doc, f, indent=1)
            f.write("\n")

    @classmethod
    def load(cls, path) -> FunnelModel:
        with open(path, encoding="utf-8") as f:
            doc = json.load(f)
        if doc.get("format") != FUNNEL_FORMAT:
            raise ValidationError(f"{path}: not a {FUNNEL_FORMAT} file")
        return cls(list(doc["model_names"]), np.array(doc["weights"], dtype=np.float64),
                   np.array(doc["biases"], dtype=np.float64), float(doc["C"]))


def funnel_train(
    tables: Sequence[PredictionTable],
    gold: Mapping[str, str | int],
    C: float = 1.0,
    tol: float = 1e-6,
    max_iter: int = 1000,
) -> FunnelModel:
    """One-vs-rest logistic heads over concatenated probability triples.

    Train on a held-out split the base models never saw.
    """
    names = [t.model_name for t in tables]
    if not tables:
        raise ValidationError("funnel needs at least one model")
    if len(set(names)) != len(names):
        raise ValidationError(f"duplicate model names: {names}")
    ids = list(gold)
    X = np.vstack([funnel_features(tables, i) for i in ids])
    y = np.array([g if isinstance(g, int) else label_to_index(g) for g in gold.values()])
    missing = [LABELS[k] for k in range(len(LABELS)) if not np.any(y == k)]
    if missing:
        raise ValidationError(f"class(es) absent from funnel gold labels: {', '.join(missing)}")
    weights, biases = [], []
    for k in range(len(LABELS)):
        head = train_binary(X, y == k, C=C, tol=tol, max_iter=max_iter)
        weights.append(head.w)
        biases.append(head.b)
    return FunnelModel(names, np.vstack(weights), np.array(biases), C)


def funnel_predict(model: FunnelModel, tables: Sequence[PredictionTable], example_id: str):
    """Return ``(label, probs)`` for one example."""
    ordered = model.order(tables)
    probs = model.proba(funnel_features(ordered, example_id))[0]
    return LABELS[argmax(probs)], probs
