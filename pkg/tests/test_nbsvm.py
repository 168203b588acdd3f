import math

import numpy as np
import pytest

import oracles
from codemix.errors import TrainingError, ValidationError
from codemix.labels import LABELS
from codemix.nbsvm import (
    LabeledExample,
    NbSvmModel,
    RatioVector,
    log_count_ratios,
    logistic_objective,
    predict,
    predict_proba,
    scale,
    train,
    train_binary,
)
from codemix.vectorizer import SparseVector, build_vocab, tokenize, vectorize
from conftest import read_jsonl

GOOD_BAD_X = np.array([[1, 0], [1, 0], [0, 1]], dtype=float)
GOOD_BAD_Y = [1, 1, 0]


def toy_dataset():
    """Nine examples, three per class, with disjoint single-token vocabularies."""
    words = {"negative": ["bura", "ganda", "bakwaas"], "neutral": ["kal", "pata", "report"],
             "positive": ["accha", "mast", "badhiya"]}
    docs = [(w, label) for label, ws in words.items() for w in ws]
    vocab = build_vocab([[w] for w, _ in docs], (1, 1), 1)
    return vocab, [LabeledExample(vectorize([w], vocab), label) for w, label in docs]


def fixture_examples(data_dir, name, vocab=None):
    rows = read_jsonl(data_dir / name)
    toks = [tokenize(r["text"]) for r in rows]
    if vocab is None:
        vocab = build_vocab(toks, (1, 2), 2)
    return vocab, [LabeledExample(vectorize(t, vocab), r["label"]) for t, r in zip(toks, rows)]


class TestLogCountRatios:
    def test_worked_example(self):
        r = log_count_ratios(GOOD_BAD_X, GOOD_BAD_Y, alpha=1.0).r
        oracle = oracles.naive_log_count_ratios(GOOD_BAD_X.tolist(), GOOD_BAD_Y, 1.0)
        assert r == pytest.approx([math.log(2.25), math.log(0.375)], abs=1e-12)
        assert r == pytest.approx(oracle, abs=1e-12)
        assert r == pytest.approx([0.8109, -0.9808], abs=1e-4)

    def test_identical_classes_give_zero(self):
        X = np.array([[1, 0, 1], [1, 0, 1]], dtype=float)
        assert np.all(log_count_ratios(X, [1, 0]).r == 0.0)

    def test_label_swap_negates(self):
        rng = np.random.default_rng(0)
        X = (rng.random((6, 8)) < 0.5).astype(float)
        y = np.array([1, 0, 1, 0, 0, 1])
        r = log_count_ratios(X, y).r
        np.testing.assert_array_equal(log_count_ratios(X, 1 - y).r, -r)

    def test_random_matrices_match_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            n, v = rng.integers(2, 7), rng.integers(1, 9)
            X = (rng.random((n, v)) < 0.4).astype(float)
            y = np.zeros(n, int)
            y[rng.choice(n, rng.integers(1, n), replace=False)] = 1
            alpha = float(rng.uniform(0.1, 2))
            got = log_count_ratios(X, y, alpha).r
            want = oracles.naive_log_count_ratios(X.tolist(), y.tolist(), alpha)
            np.testing.assert_allclose(got, want, rtol=0, atol=1e-12)

    def test_sparse_input(self):
        xs = [SparseVector([0], [1.0], 2), SparseVector([0], [1.0], 2), SparseVector([1], [1.0], 2)]
        np.testing.assert_array_equal(log_count_ratios(xs, GOOD_BAD_Y).r, log_count_ratios(GOOD_BAD_X, GOOD_BAD_Y).r)

    def test_errors(self):
        with pytest.raises(ValidationError):
            log_count_ratios(GOOD_BAD_X, [1, 1, 1])
        with pytest.raises(ValidationError):
            log_count_ratios(GOOD_BAD_X, GOOD_BAD_Y, alpha=0.0)


class TestScale:
    def test_example(self):
        r = log_count_ratios(GOOD_BAD_X, GOOD_BAD_Y).r
        x = SparseVector([0, 1], [1.0, 1.0], 2)
        out = scale(x, RatioVector(r))
        assert out.indices.tolist() == [0, 1]
        assert out.values == pytest.approx([0.8109302162, -0.9808292530])

    def test_zero_ratios_keep_support(self):
        x = SparseVector([0, 2], [1.0, 1.0], 3)
        out = scale(x, np.zeros(3))
        assert out.indices.tolist() == [0, 2] and not out.values.any()

    def test_empty(self):
        assert len(scale(SparseVector([], [], 3), np.ones(3))) == 0

    def test_dimension_mismatch(self):
        with pytest.raises(ValidationError):
            scale(SparseVector([], [], 3), np.ones(2))


class TestLogisticCore:
    def test_loss_matches_naive(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(7, 4))
        y = rng.integers(0, 2, 7)
        w, b = rng.normal(size=4), 0.3
        loss, _ = logistic_objective(np.append(w, b), X, np.where(y, 1.0, -1.0), 4.0)
        assert loss == pytest.approx(oracles.naive_logistic_loss(w, b, X.tolist(), y.tolist(), 4.0), rel=1e-12)

    def test_gradient_finite_differences(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(12, 5))
        y_pm = np.where(rng.random(12) < 0.5, 1.0, -1.0)
        h = 1e-5
        for _ in range(10):
            params = rng.normal(size=6)
            _, grad = logistic_objective(params, X, y_pm, 4.0)
            fd = np.empty_like(params)
            for j in range(len(params)):
                e = np.zeros_like(params)
                e[j] = h
                fd[j] = (logistic_objective(params + e, X, y_pm, 4.0)[0]
                         - logistic_objective(params - e, X, y_pm, 4.0)[0]) / (2 * h)
            assert np.linalg.norm(grad - fd) / np.linalg.norm(fd) < 1e-5

    def test_separable_pair(self):
        head = train_binary(np.array([[1.0], [-1.0]]), [1, 0])
        assert head.w[0] > 0 and abs(head.b) < 1e-6
        assert np.all((head.decision(np.array([[1.0], [-1.0]])) > 0) == [True, False])

    def test_tiny_C_shrinks_weights(self):
        X = np.array([[1.0], [-1.0]])
        norms = [np.linalg.norm(train_binary(X, [1, 0], C=c).w) for c in (1.0, 1e-2, 1e-4)]
        assert norms[0] > norms[1] > norms[2] and norms[2] < 1e-3

    def test_converges_to_gradient_tolerance(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(40, 6))
        y = (X[:, 0] + 0.5 * rng.normal(size=40) > 0).astype(int)
        head = train_binary(X, y, C=4.0)
        _, grad = logistic_objective(np.append(head.w, head.b), X, np.where(y, 1.0, -1.0), 4.0)
        assert np.max(np.abs(grad)) < 1e-6

    def test_two_starts_agree(self):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(30, 4))
        y = (rng.random(30) < 0.5).astype(int)
        a = train_binary(X, y, C=4.0)
        b = train_binary(X, y, C=4.0, init=np.random.default_rng(99).normal(size=5))
        assert abs(a.loss - b.loss) / abs(a.loss) < 1e-6

    def test_deterministic(self):
        rng = np.random.default_rng(6)
        X = rng.normal(size=(20, 3))
        y = (rng.random(20) < 0.5).astype(int)
        np.testing.assert_array_equal(train_binary(X, y).w, train_binary(X, y).w)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_nonfinite_loss_raises(self):
        X = np.array([[1e308], [-1e308]])
        with pytest.raises(TrainingError, match="non-finite"):
            train_binary(X, [1, 0], init=np.array([10.0, 0.0]))

    def test_single_class_rejected(self):
        with pytest.raises(ValidationError):
            train_binary(np.eye(2), [1, 1])


class TestModel:
    def test_toy_training_accuracy(self):
        vocab, data = toy_dataset()
        model = train(data, vocab=vocab)
        assert [predict(model, ex.features) for ex in data] == [LABELS[ex.label] for ex in data]

    def test_beta_one_is_raw_head(self):
        vocab, data = toy_dataset()
        model = train(data, beta=1.0, vocab=vocab)
        X = np.vstack([ex.features.to_dense() for ex in data])
        y = np.array([ex.label for ex in data])
        for k in range(3):
            r = log_count_ratios(X, y == k).r
            head = train_binary(X * r, y == k, C=4.0)
            np.testing.assert_allclose(model.weights[k], head.w, atol=1e-6)

    def test_beta_zero_is_uniform(self):
        vocab, data = toy_dataset()
        raw = train(data, beta=1.0, vocab=vocab)
        flat = train(data, beta=0.0, vocab=vocab)
        for k in range(3):
            np.testing.assert_allclose(flat.weights[k], np.mean(np.abs(raw.weights[k])))

    def test_missing_class_named(self):
        vocab, data = toy_dataset()
        with pytest.raises(ValidationError, match="neutral"):
            train([ex for ex in data if ex.label != 1], vocab=vocab)

    def test_bad_beta(self):
        vocab, data = toy_dataset()
        with pytest.raises(ValidationError):
            train(data, beta=1.5)

    def test_proba_properties(self):
        vocab, data = toy_dataset()
        model = train(data, vocab=vocab)
        for ex in data:
            p = predict_proba(model, ex.features)
            assert abs(p.sum() - 1) < 1e-12 and np.all((p > 0) & (p < 1))
        p_empty = predict_proba(model, SparseVector([], [], len(vocab)))
        s = 1 / (1 + np.exp(-model.biases))
        np.testing.assert_allclose(p_empty, s / s.sum())

    def test_equal_scores_tie_to_negative(self):
        model = NbSvmModel(None, np.zeros((3, 2)), np.zeros((3, 2)), np.zeros(3))
        x = SparseVector([0], [1.0], 2)
        np.testing.assert_allclose(predict_proba(model, x), [1 / 3] * 3)
        assert predict(model, x) == "negative"

    def test_argmax_label(self):
        model = NbSvmModel(None, np.ones((3, 1)), np.zeros((3, 1)), np.log(np.array([0.2, 0.3, 0.5]) / 0.8))
        assert predict(model, SparseVector([], [], 1)) == "positive"

    def test_dimension_mismatch(self):
        vocab, data = toy_dataset()
        model = train(data, vocab=vocab)
        with pytest.raises(ValidationError):
            predict_proba(model, SparseVector([], [], len(vocab) + 1))

    def test_ratio_scaling_invariance(self, data_dir):
        vocab, data = fixture_examples(data_dir, "separable_train.jsonl")
        base = train(data, vocab=vocab)
        c = 3.0
        X = np.vstack([ex.features.to_dense() for ex in data])
        y = np.array([ex.label for ex in data])
        scores = []
        for k in range(3):
            r = c * log_count_ratios(X, y == k).r
            head = train_binary(X * r, y == k, C=4.0 / c**2)
            scores.append(X * r @ head.w + head.b)
        rescaled = np.argmax(np.column_stack(scores), axis=1)
        original = base.predict_proba_matrix(X).argmax(axis=1)
        np.testing.assert_array_equal(rescaled, original)

    def test_save_load_bit_exact(self, data_dir, tmp_path):
        vocab, data = fixture_examples(data_dir, "separable_train.jsonl")
        model = train(data, vocab=vocab, C=4.0, alpha=0.5, beta=0.9)
        model.pipeline = {"clean": True}
        model.save(tmp_path / "m.npz")
        loaded = NbSvmModel.load(tmp_path / "m.npz")
        assert loaded.vocab == vocab and loaded.pipeline == {"clean": True}
        assert (loaded.alpha, loaded.C, loaded.beta) == (0.5, 4.0, 0.9)
        for ex in data:
            assert np.array_equal(predict_proba(model, ex.features), predict_proba(loaded, ex.features))
