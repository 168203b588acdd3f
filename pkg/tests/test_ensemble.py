import itertools

import numpy as np
import pytest

import oracles
from codemix.ensemble import (
    FunnelModel,
    PredictionRecord,
    PredictionTable,
    common_ids,
    funnel_features,
    funnel_predict,
    funnel_train,
    load_predictions,
    vote_scores,
    weighted_vote,
    write_predictions,
)
from codemix.errors import ValidationError
from codemix.labels import LABELS



def probs_for(label, conf):
    """Probability triple with argmax ``label`` and max probability ``conf`` (> 1/3)."""
    k = LABELS.index(label)
    rest = (1 - conf) / 2
    return tuple(conf if i == k else rest for i in range(3))


def table(name, rows):
    return PredictionTable.from_rows(name, rows)


def single(name, label, conf, ex_id="x"):
    return table(name, [(ex_id, probs_for(label, conf))])


class TestRecords:
    def test_derived_fields(self):
        r = PredictionRecord("a", (0.2, 0.3, 0.5))
        assert r.predicted == "positive" and r.confidence == 0.5

    def test_tie_break(self):
        assert PredictionRecord("a", (0.4, 0.4, 0.2)).predicted == "negative"


class TestLoad:
    def test_well_formed(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("id,p_negative,p_neutral,p_positive\na,0.2,0.3,0.5\nb,1,0,0\nc,0.3,0.4,0.3\n")
        t = load_predictions(p)
        assert t.model_name == "m" and len(t) == 3
        assert t.records["a"].probs == (0.2, 0.3, 0.5)

    def test_bad_sum_reports_line(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("id,p_negative,p_neutral,p_positive\nok,0.2,0.3,0.5\nid1,0.5,0.5,0.5\n")
        with pytest.raises(ValidationError, match=r"m\.csv:3"):
            load_predictions(p)

    def test_sum_tolerance(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("id,p_negative,p_neutral,p_positive\na,0.2,0.3,0.5000005\n")
        assert load_predictions(p).get("a").probs[2] == 0.5000005
        p.write_text("id,p_negative,p_neutral,p_positive\na,0.2,0.3,0.5001\n")
        with pytest.raises(ValidationError, match="sum"):
            load_predictions(p)

    def test_duplicate_id(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("id,p_negative,p_neutral,p_positive\na,1,0,0\na,0,1,0\n")
        with pytest.raises(ValidationError, match="duplicate"):
            load_predictions(p)

    def test_header_only_warns(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("id,p_negative,p_neutral,p_positive\n")
        with pytest.warns(UserWarning):
            assert len(load_predictions(p)) == 0

    def test_bad_header(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("id,neg,neu,pos\n")
        with pytest.raises(ValidationError):
            load_predictions(p)

    def test_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        rows = []
        for i in range(20):
            v = rng.random(3)
            rows.append((f"id{i}", v / v.sum()))
        write_predictions(tmp_path / "p.csv", rows)
        t = load_predictions(tmp_path / "p.csv")
        for ex_id, probs in rows:
            assert t.records[ex_id].probs == tuple(probs.tolist())


class TestVote:
    def test_unanimous(self):
        tabs = [single(n, "positive", c) for n, c in zip("abc", (0.6, 0.9, 0.55))]
        assert weighted_vote(tabs, "x") == "positive"

    def test_hand_example(self):
        tabs = [single("A", "positive", 0.9), single("B", "negative", 0.6), single("C", "negative", 0.4)]
        np.testing.assert_allclose(vote_scores(tabs, "x"), [1.0, 0.0, 0.9])
        assert weighted_vote(tabs, "x") == "negative"

    def test_tie_goes_to_canonical_order(self):
        tabs = [single("A", "positive", 0.7), single("B", "negative", 0.7)]
        assert weighted_vote(tabs, "x") == "negative"

    def test_votes_argmax_not_probability_sum(self):
        # probability sums favour neutral, but both models vote for other classes
        tabs = [table("A", [("x", (0.0, 0.45, 0.55))]), table("B", [("x", (0.55, 0.45, 0.0))])]
        assert weighted_vote(tabs, "x") == "negative"

    def test_missing_id_names_model(self):
        tabs = [single("A", "positive", 0.9), single("B", "negative", 0.6, ex_id="y")]
        with pytest.raises(ValidationError, match="'B'"):
            weighted_vote(tabs, "x")

    def test_brute_force_agreement(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            k = rng.integers(1, 5)
            tabs, votes = [], []
            for m in range(k):
                v = rng.random(3) ** 3
                v /= v.sum()
                tabs.append(table(f"m{m}", [("x", v)]))
                votes.append((LABELS[int(np.argmax(v))], float(v.max())))
            assert weighted_vote(tabs, "x") == oracles.brute_vote(votes)

    def test_order_invariant(self):
        tabs = [single("A", "positive", 0.9), single("B", "negative", 0.6), single("C", "neutral", 0.8)]
        outcomes = {weighted_vote(list(p), "x") for p in itertools.permutations(tabs)}
        assert len(outcomes) == 1

    def test_confidence_monotonicity(self):
        base = [single("B", "negative", 0.6), single("C", "neutral", 0.7)]
        prev_won = False
        for conf in np.linspace(0.34, 1.0, 30):
            a = table("A", [("x", probs_for("positive", conf) if conf > 0.5 else (0.33, 0.33, 0.34))])
            won = weighted_vote([a, *base], "x") == "positive"
            assert won or not prev_won
            prev_won = won


def _perfect_tables(n=30, seed=0):
    rng = np.random.default_rng(seed)
    gold = {}
    rows = []
    for i in range(n):
        label = LABELS[i % 3]
        gold[f"e{i}"] = label
        rows.append((f"e{i}", probs_for(label, float(rng.uniform(0.6, 0.95)))))
    return gold, table("base", rows)


class TestFunnel:
    def test_features(self):
        a = table("A", [("x", (0.2, 0.3, 0.5))])
        b = table("B", [("x", (0.6, 0.3, 0.1))])
        np.testing.assert_allclose(funnel_features([a], "x"), [0.2, 0.3, 0.5])
        np.testing.assert_allclose(funnel_features([a, b], "x"), [0.2, 0.3, 0.5, 0.6, 0.3, 0.1])
        np.testing.assert_allclose(funnel_features([b, a], "x"), [0.6, 0.3, 0.1, 0.2, 0.3, 0.5])

    def test_perfect_base_copied(self):
        gold, base = _perfect_tables()
        model = funnel_train([base], gold)
        preds = [funnel_predict(model, [base], i)[0] for i in gold]
        assert preds == list(gold.values())

    def test_single_model_agreement(self):
        rng = np.random.default_rng(2)
        gold, rows = {}, []
        for i in range(90):
            label = LABELS[i % 3]
            gold[f"e{i}"] = label
            v = rng.random(3) * 0.5
            v[i % 3] += 1.0
            rows.append((f"e{i}", v / v.sum()))
        base = table("base", rows)
        model = funnel_train([base], gold)
        agree = np.mean([funnel_predict(model, [base], i)[0] == base.records[i].predicted for i in gold])
        assert agree >= 0.95

    def test_contradictory_gold_trains(self):
        rows = [(f"e{i}", (1 / 3, 1 / 3, 1 / 3)) for i in range(6)]
        gold = {f"e{i}": LABELS[i % 3] for i in range(6)}
        model = funnel_train([table("m", rows)], gold)
        acc = np.mean([funnel_predict(model, [table("m", rows)], i)[0] == g for i, g in gold.items()])
        assert acc < 1.0

    def test_missing_class(self):
        gold, base = _perfect_tables()
        gold = {i: g for i, g in gold.items() if g != "neutral"}
        with pytest.raises(ValidationError, match="neutral"):
            funnel_train([base], gold)

    def test_model_set_guard(self):
        gold, base = _perfect_tables()
        other = table("other", [(i, r.probs) for i, r in base.records.items()])
        model = funnel_train([base, other], gold)
        third = table("third", [(i, r.probs) for i, r in base.records.items()])
        with pytest.raises(ValidationError):
            funnel_predict(model, [base, other, third], "e0")
        with pytest.raises(ValidationError):
            funnel_predict(model, [base], "e0")
        # declared order is restored regardless of argument order
        assert funnel_predict(model, [other, base], "e0")[0] == funnel_predict(model, [base, other], "e0")[0]

    def test_block_permutation_changes_features(self):
        gold, base = _perfect_tables()
        flipped = table("flipped", [(i, r.probs[::-1]) for i, r in base.records.items()])
        model = funnel_train([base, flipped], gold)
        x = funnel_features([base, flipped], "e0")
        swapped = funnel_features([flipped, base], "e0")
        assert not np.allclose(model.proba(x), model.proba(swapped))

    def test_deterministic_and_normalized(self):
        gold, base = _perfect_tables()
        model = funnel_train([base], gold)
        a = funnel_predict(model, [base], "e1")
        b = funnel_predict(model, [base], "e1")
        assert a[0] == b[0] and np.array_equal(a[1], b[1])
        assert abs(a[1].sum() - 1) < 1e-12

    def test_save_load(self, tmp_path):
        gold, base = _perfect_tables()
        model = funnel_train([base], gold, C=2.0)
        model.save(tmp_path / "f.json")
        loaded = FunnelModel.load(tmp_path / "f.json")
        assert loaded.model_names == ["base"] and loaded.C == 2.0
        for i in gold:
            assert np.array_equal(funnel_predict(model, [base], i)[1], funnel_predict(loaded, [base], i)[1])


def test_common_ids_mismatch():
    a = table("a", [("x", (1, 0, 0))])
    b = table("b", [("y", (1, 0, 0))])
    with pytest.raises(ValidationError):
        common_ids([a, b])
