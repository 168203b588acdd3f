"""NB-SVM: logistic regression over features scaled by Naive Bayes log-count ratios.

Three polarity classes are handled one-vs-rest. Each head gets its own
ratio vector ``r_k`` and linear weights; head scores are squashed with the
logistic function and renormalized to a probability triple.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.optimize import minimize
from scipy.special import expit

from codemix.errors import TrainingError, ValidationError
from codemix.fileio import atomic_write
from codemix.labels import LABELS, argmax, label_to_index
from codemix.vectorizer import SparseVector, Vocabulary, stack

log = logging.getLogger(__name__)

MODEL_FORMAT = "codemix-nbsvm/1"


@dataclass
class LabeledExample:
    features: SparseVector
    label: int

    def __post_init__(self):
        if isinstance(self.label, str):
            self.label = label_to_index(self.label)
        if self.label not in (0, 1, 2):
            raise ValidationError(f"label index must be 0, 1 or 2, got {self.label}")


@dataclass
class RatioVector:
    r: np.ndarray
    alpha: float = 1.0


@dataclass
class LinearHead:
    w: np.ndarray
    b: float
    C: float = 4.0
    loss: float = field(default=float("nan"), compare=False)
    n_iter: int = field(default=0, compare=False)

    def decision(self, X) -> np.ndarray:
        return np.asarray(X @ self.w).ravel() + self.b


def _as_matrix(X, dim: int | None = None):
    if isinstance(X, (sp.spmatrix, sp.sparray)):
        return sp.csr_matrix(X, dtype=np.float64)
    if isinstance(X, np.ndarray):
        return np.asarray(X, dtype=np.float64)
    X = list(X)
    if X and isinstance(X[0], SparseVector):
        return stack(X, dim)
    return np.asarray(X, dtype=np.float64)


def log_count_ratios(X, y, alpha: float = 1.0) -> RatioVector:
    """Smoothed log ratio of per-feature presence rates, positive vs negative class.

    ``p = alpha + sum of positive rows``, ``q = alpha + sum of negative rows``,
    ``r = log(p / |p|_1) - log(q / |q|_1)``.
    """
    if not alpha > 0:
        raise ValidationError(f"alpha must be > 0, got {alpha}")
    X = _as_matrix(X)
    y = np.asarray(y).astype(bool).ravel()
    if X.shape[0] != len(y):
        raise ValidationError(f"{X.shape[0]} rows but {len(y)} labels")
    if y.all() or not y.any():
        raise ValidationError("log-count ratios need both positive and negative examples")
    p = alpha + np.asarray(X[y].sum(axis=0)).ravel()
    q = alpha + np.asarray(X[~y].sum(axis=0)).ravel()
    r = np.log(p / p.sum()) - np.log(q / q.sum())
    return RatioVector(r, alpha)


def scale(x: SparseVector, ratios: RatioVector | np.ndarray) -> SparseVector:
    """Elementwise ``x * r``; zero products are kept so the support never changes."""
    r = ratios.r if isinstance(ratios, RatioVector) else np.asarray(ratios)
    if len(r) != x.dim:
        raise ValidationError(f"dimension mismatch: vector has {x.dim}, ratios have {len(r)}")
    out = SparseVector.__new__(SparseVector)
    out.indices = x.indices.copy()
    out.values = x.values * r[x.indices]
    out.dim = x.dim
    return out


def logistic_objective(params: np.ndarray, X, y_pm: np.ndarray, C: float):
    """Loss and gradient of ``0.5 |w|^2 + C * sum log(1 + exp(-y (w.x + b)))``.

    ``params`` is ``w`` followed by the (unregularized) bias; labels are +-1.
    """
    w, b = params[:-1], params[-1]
    margins = y_pm * (np.asarray(X @ w).ravel() + b)
    loss = 0.5 * float(w @ w) + C * float(np.logaddexp(0.0, -margins).sum())
    coef = -C * y_pm * expit(-margins)
    grad = np.empty_like(params)
    grad[:-1] = w + np.asarray(X.T @ coef).ravel()
    grad[-1] = coef.sum()
    return loss, grad


def train_binary(
    X,
    y,
    C: float = 4.0,
    tol: float = 1e-6,
    max_iter: int = 1000,
    init: np.ndarray | None = None,
) -> LinearHead:
    """Fit a regularized logistic head with L-BFGS until the gradient inf-norm is below ``tol``."""
    if not C > 0:
        raise ValidationError(f"C must be > 0, got {C}")
    X = _as_matrix(X)
    y = np.asarray(y).ravel()
    y_pm = np.where(y.astype(bool), 1.0, -1.0)
    if X.shape[0] != len(y_pm):
        raise ValidationError(f"{X.shape[0]} rows but {len(y_pm)} labels")
    if (y_pm > 0).all() or (y_pm < 0).all():
        raise ValidationError("binary training needs both classes present")

    dim = X.shape[1]
    x0 = np.zeros(dim + 1) if init is None else np.asarray(init, dtype=np.float64).copy()
    if x0.shape != (dim + 1,):
        raise ValidationError(f"init must have length {dim + 1}")

    evals = 0

    def fun(params):
        nonlocal evals
        evals += 1
        loss, grad = logistic_objective(params, X, y_pm, C)
        if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
            raise TrainingError(
                f"non-finite loss at evaluation {evals} "
                f"(|w|_inf={np.max(np.abs(params[:-1]), initial=0.0):.3g}, b={params[-1]:.3g})"
            )
        return loss, grad

    res = minimize(
        fun, x0, jac=True, method="L-BFGS-B",
        options={"maxiter": max_iter, "gtol": tol, "ftol": 1e-15, "maxcor": 20},
    )
    gnorm = float(np.max(np.abs(res.jac)))
    if gnorm >= tol:
        log.debug("logistic fit stopped with |grad|_inf=%.3g after %d iterations: %s",
                  gnorm, res.nit, res.message)
    return LinearHead(w=res.x[:-1].copy(), b=float(res.x[-1]), C=C, loss=float(res.fun), n_iter=int(res.nit))


@dataclass
class NbSvmModel:
    vocab: Vocabulary | None
    ratios: np.ndarray  # (3, V)
    weights: np.ndarray  # (3, V)
    biases: np.ndarray  # (3,)
    alpha: float = 1.0
    C: float = 4.0
    beta: float = 1.0
    pipeline: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.ratios.shape[1]

    def head(self, k: int) -> tuple[RatioVector, LinearHead]:
        return RatioVector(self.ratios[k], self.alpha), LinearHead(self.weights[k], float(self.biases[k]), self.C)

    def scores(self, X) -> np.ndarray:
        """Per-head sigmoid scores, shape ``(n, 3)``."""
        X = _as_matrix(X, self.dim)
        if X.shape[1] != self.dim:
            raise ValidationError(f"dimension mismatch: model has {self.dim}, features have {X.shape[1]}")
        cols = []
        for k in range(len(LABELS)):
            scaled = X.multiply(self.ratios[k]) if sp.issparse(X) else X * self.ratios[k]
            cols.append(np.asarray(scaled @ self.weights[k]).ravel() + self.biases[k])
        return expit(np.column_stack(cols))

    def predict_proba_matrix(self, X) -> np.ndarray:
        s = self.scores(X)
        return s / s.sum(axis=1, keepdims=True)

    def save(self, path) -> None:
        meta = {"format": MODEL_FORMAT, "alpha": self.alpha, "C": self.C, "beta": self.beta,
                "labels": list(LABELS), "pipeline": self.pipeline}
        arrays = dict(ratios=self.ratios, weights=self.weights, biases=self.biases,
                      meta=np.array(json.dumps(meta)))
        if self.vocab is not None:
            arrays["vocab_header"] = np.array(self.vocab.header())
            arrays["vocab_terms"] = np.array(self.vocab.terms(), dtype=str)
            arrays["vocab_df"] = np.asarray(self.vocab.df, dtype=np.int64)
        with atomic_write(path, "wb") as f:
            np.savez(f, **arrays)

    @classmethod
    def load(cls, path) -> NbSvmModel:
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(str(z["meta"]))
            if meta.get("format") != MODEL_FORMAT:
                raise ValidationError(f"{path}: not a {MODEL_FORMAT} model file")
            vocab = None
            if "vocab_header" in z:
                params = Vocabulary.parse_header(str(z["vocab_header"]))
                terms = [str(t) for t in z["vocab_terms"]]
                vocab = Vocabulary(index={t: i for i, t in enumerate(terms)},
                                   df=[int(d) for d in z["vocab_df"]], **params)
            return cls(vocab=vocab, ratios=z["ratios"].copy(), weights=z["weights"].copy(),
                       biases=z["biases"].copy(), alpha=meta["alpha"], C=meta["C"], beta=meta["beta"],
                       pipeline=meta.get("pipeline", {}))


def interpolate(w: np.ndarray, beta: float) -> np.ndarray:
    """``(1 - beta) * mean|w| + beta * w``; beta=1 leaves ``w`` untouched."""
    if beta == 1.0:
        return w.copy()
    m = float(np.mean(np.abs(w))) if len(w) else 0.0
    return (1.0 - beta) * m + beta * w


def train(
    dataset: Sequence[LabeledExample],
    alpha: float = 1.0,
    C: float = 4.0,
    beta: float = 1.0,
    vocab: Vocabulary | None = None,
    tol: float = 1e-6,
    max_iter: int = 1000,
) -> NbSvmModel:
    if not 0.0 <= beta <= 1.0:
        raise ValidationError(f"beta must be in [0, 1], got {beta}")
    if not dataset:
        raise ValidationError("training set is empty")
    dim = len(vocab) if vocab is not None else dataset[0].features.dim
    X = stack([ex.features for ex in dataset], dim)
    y = np.array([ex.label for ex in dataset])
    missing = [LABELS[k] for k in range(len(LABELS)) if not np.any(y == k)]
    if missing:
        raise ValidationError(f"class(es) absent from training data: {', '.join(missing)}")

    ratios, weights, biases = [], [], []
    for k, name in enumerate(LABELS):
        target = y == k
        rv = log_count_ratios(X, target, alpha)
        head = train_binary(X.multiply(rv.r).tocsr(), target, C=C, tol=tol, max_iter=max_iter)
        log.info("head %s: loss=%.6g after %d iterations", name, head.loss, head.n_iter)
        ratios.append(rv.r)
        weights.append(interpolate(head.w, beta))
        biases.append(head.b)
    return NbSvmModel(vocab=vocab, ratios=np.vstack(ratios), weights=np.vstack(weights),
                      biases=np.array(biases), alpha=alpha, C=C, beta=beta)


def predict_proba(model: NbSvmModel, x: SparseVector) -> np.ndarray:
    """Probability triple in (negative, neutral, positive) order."""
    if x.dim != model.dim:
        raise ValidationError(f"dimension mismatch: model has {model.dim}, vector has {x.dim}")
    return model.predict_proba_matrix(stack([x], model.dim))[0]


def predict(model: NbSvmModel, x: SparseVector) -> str:
    return LABELS[argmax(predict_proba(model, x))]
