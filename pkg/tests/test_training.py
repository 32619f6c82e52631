import csv
import math

import numpy as np
import pytest

from softhorn import data, model, rules, training
from softhorn.compiler import compile_plan
from softhorn.errors import ConfigError, DivergenceError
from softhorn.kb import KnowledgeBase, apply_checkpoint
from softhorn.templates import ConstraintSpec
from softhorn.training import (
    LossHead,
    TrainConfig,
    TrainingExample,
    evaluate_accuracy,
    evaluate_retrieval_f1,
    head_loss,
    total_loss,
    train,
)

from conftest import build_toy_kb, compile_toy


def _constant_loss_head(kb, name, loss_value):
    """A head whose mean cross-entropy is exactly ``loss_value``.

    Uses one non-trainable fact with weight e^-loss so the raw plan output at
    the target equals e^-loss.
    """
    rel = f"score_{name}"
    q = kb.intern(f"q_{name}")
    t = kb.intern(f"t_{name}")
    kb.add_fact(rel, q, t, math.exp(-loss_value))
    text = f"{name}(X,Y) :- {rel}(X,Y).\n"
    return text, [TrainingExample(name, q, t)]


def _supervised_bundle(seed=0, docs=40):
    bundle = data.generate_synthetic(
        classes=2, vocab_per_class=5, ambiguity=0.0, docs=docs,
        graph_homophily=1.0, seed=seed)
    bundle.train = list(bundle.docs)
    return bundle


class TestLossHeads:
    def test_negative_weight_rejected(self, toy_plan):
        plan, _, _ = toy_plan
        with pytest.raises(ConfigError):
            LossHead("h", plan, [], weight=-0.1)

    def test_total_loss_arithmetic(self):
        kb = KnowledgeBase()
        parts = [("p0", 0.7), ("h1", 0.5), ("h2", 0.25)]
        texts, heads_src = [], []
        for name, value in parts:
            text, examples = _constant_loss_head(kb, name, value)
            texts.append(text)
            heads_src.append((name, examples))
        kb.freeze()
        vp = rules.validate_program(rules.parse_program("".join(texts)), kb)
        weights = [1.0, 1.0, 2.0]
        heads = [
            LossHead(name, compile_plan(vp, name, kb), examples, weight=w)
            for (name, examples), w in zip(heads_src, weights)
        ]
        assert head_loss(heads[0], kb) == pytest.approx(0.7, abs=1e-9)
        assert total_loss(heads, kb) == pytest.approx(
            0.7 + 1.0 * 0.5 + 2.0 * 0.25, abs=1e-9)
        assert total_loss(heads, kb) == pytest.approx(1.7, abs=1e-9)

    def test_zero_weights_reduce_to_supervised(self, rng):
        kb, names = build_toy_kb(trainable=True)
        kb.set_param_vector(rng.uniform(-1, 1, 4))
        plan = compile_toy(kb, softmax=True)
        sup = LossHead("predict", plan,
                       [TrainingExample("predict", names["x1"], names["accept"])])
        extra = LossHead("er", plan,
                         [TrainingExample("predict", names["x1"], names["reject"])],
                         weight=0.0)
        assert total_loss([sup, extra], kb) == head_loss(sup, kb)

    def test_affine_in_each_weight(self, rng):
        kb, names = build_toy_kb(trainable=True)
        kb.set_param_vector(rng.uniform(-1, 1, 4))
        plan = compile_toy(kb, softmax=True)
        sup = LossHead("predict", plan,
                       [TrainingExample("predict", names["x1"], names["accept"])])
        extra = LossHead("er", plan,
                         [TrainingExample("predict", names["x1"], names["reject"])],
                         weight=1.0)
        slope = head_loss(extra, kb)
        for w in (0.0, 1.0, 2.5):
            extra.weight = w
            assert total_loss([sup, extra], kb) == pytest.approx(
                head_loss(sup, kb) + w * slope, abs=1e-12)

    def test_empty_head_contributes_zero(self, toy_plan):
        plan, kb, _ = toy_plan
        assert head_loss(LossHead("h", plan, []), kb) == 0.0


class TestTrainConfig:
    @pytest.mark.parametrize("kwargs", [
        {"epochs": 0}, {"batch_size": 0}, {"lr": 0.0},
        {"optimizer": "lbfgs"}, {"patience": 0},
    ])
    def test_invalid_config(self, kwargs):
        with pytest.raises(ConfigError):
            TrainConfig(**kwargs)


class TestTrain:
    def test_separable_reaches_perfect_train_accuracy(self):
        bundle = _supervised_bundle()
        heads, plan = model.build_model(bundle, [])
        cfg = TrainConfig(epochs=200, batch_size=32, lr=0.05, seed=0)
        train(heads, bundle.kb, cfg)
        acc = evaluate_accuracy(plan, bundle.kb, bundle.pairs(bundle.train))
        assert acc == 1.0

    def test_same_seed_identical_history_and_params(self):
        results = []
        for _ in range(2):
            bundle = _supervised_bundle()
            heads, _ = model.build_model(bundle, [])
            cfg = TrainConfig(epochs=10, batch_size=8, lr=0.05, seed=42)
            params, history = train(heads, bundle.kb, cfg)
            results.append((params, history))
        assert np.array_equal(results[0][0], results[1][0])
        a = [(r["epoch"], r["head"], r["loss"]) for r in results[0][1]]
        b = [(r["epoch"], r["head"], r["loss"]) for r in results[1][1]]
        assert a == b

    def test_zero_weight_head_is_gradient_neutral(self):
        trajectories = []
        for with_extra in (False, True):
            bundle = _supervised_bundle()
            specs = [ConstraintSpec("ER", weight=0.0)] if with_extra else []
            bundle.unlabeled = bundle.docs[-10:]
            heads, _ = model.build_model(bundle, specs)
            cfg = TrainConfig(epochs=15, batch_size=8, lr=0.05, seed=7)
            params, _ = train(heads, bundle.kb, cfg)
            trajectories.append(params)
        assert np.array_equal(trajectories[0], trajectories[1])

    def test_full_batch_sgd_loss_nonincreasing(self):
        bundle = _supervised_bundle(docs=24)
        heads, _ = model.build_model(bundle, [])
        cfg = TrainConfig(epochs=40, batch_size=len(bundle.train), lr=0.01,
                          optimizer="sgd", seed=0)
        _, history = train(heads, bundle.kb, cfg)
        losses = [r["loss"] for r in history if r["head"] == "total"]
        assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))

    def test_divergence_raises_with_epoch(self):
        bundle = _supervised_bundle(docs=16)
        heads, _ = model.build_model(bundle, [])
        bundle.kb.set_param_vector(
            np.full(bundle.kb.parameter_count(), np.nan))
        cfg = TrainConfig(epochs=5, batch_size=8, lr=0.05, seed=0)
        with pytest.raises(DivergenceError) as exc:
            train(heads, bundle.kb, cfg)
        assert exc.value.epoch == 0

    def test_early_stopping_on_validation(self):
        bundle = _supervised_bundle(docs=30)
        bundle.train, bundle.val = bundle.docs[:20], bundle.docs[20:]
        heads, plan = model.build_model(bundle, [])
        cfg = TrainConfig(epochs=500, batch_size=8, lr=0.05, seed=0, patience=3)
        _, history = train(heads, bundle.kb, cfg, val=bundle.pairs(bundle.val))
        epochs_run = max(r["epoch"] for r in history) + 1
        assert epochs_run < 500

    def test_unfrozen_kb_rejected(self, toy_plan):
        plan, _, names = toy_plan
        kb = KnowledgeBase()
        head = LossHead("predict", plan, [])
        with pytest.raises(ConfigError):
            train([head], kb, TrainConfig(epochs=1))


def _labeling_plan(labels_by_doc):
    """KB + plan whose argmax prediction for each doc is fixed by facts."""
    kb = KnowledgeBase()
    ids = {}
    for doc, label in labels_by_doc.items():
        d, l = kb.intern(doc), kb.intern(label)
        ids[doc], ids[label] = d, l
        kb.add_fact("lab", d, l, 1.0)
    kb.freeze()
    vp = rules.validate_program(rules.parse_program("p(X,Y) :- lab(X,Y)."), kb)
    return compile_plan(vp, "p", kb), kb, ids


class TestMetrics:
    def test_all_correct_is_one(self):
        plan, kb, ids = _labeling_plan({"d0": "r", "d1": "s"})
        pairs = [(ids["d0"], ids["r"]), (ids["d1"], ids["s"])]
        assert evaluate_accuracy(plan, kb, pairs) == 1.0

    def test_empty_support_counts_incorrect(self):
        plan, kb, ids = _labeling_plan({"d0": "r"})
        pairs = [(ids["d0"], ids["r"]), (ids["r"], ids["r"])]
        assert evaluate_accuracy(plan, kb, pairs) == 0.5

    def test_empty_test_set_rejected(self):
        plan, kb, _ = _labeling_plan({"d0": "r"})
        with pytest.raises(ConfigError):
            evaluate_accuracy(plan, kb, [])

    def test_random_gold_matches_binomial_rate(self, rng):
        plan, kb, ids = _labeling_plan({"d0": "r", "d1": "s"})
        labels = [ids["r"], ids["s"]]
        n = 1000
        pairs = [(ids["d0"], int(rng.choice(labels))) for _ in range(n)]
        acc = evaluate_accuracy(plan, kb, pairs)
        sigma = math.sqrt(0.25 / n)
        assert abs(acc - 0.5) <= 3 * sigma

    def test_retrieval_exact_match(self):
        plan, kb, ids = _labeling_plan({"d0": "r", "d1": "r", "x": "other"})
        gold = [(ids["d0"], ids["r"]), (ids["d1"], ids["r"])]
        p, r, f1 = evaluate_retrieval_f1(
            plan, kb, [ids["d0"], ids["d1"]], gold, ids["other"])
        assert (p, r, f1) == (1.0, 1.0, 1.0)

    def test_retrieval_half_half(self):
        # 4 gold docs: 2 retrieved correctly, 2 predicted "other" (dropped);
        # 2 extra docs retrieved wrongly -> P = R = F1 = 0.5.
        plan, kb, ids = _labeling_plan({
            "d0": "r", "d1": "r", "d2": "other", "d3": "other",
            "d4": "r", "d5": "r"})
        gold = [(ids[d], ids["r"]) for d in ("d0", "d1", "d2", "d3")]
        docs = [ids[f"d{i}"] for i in range(6)]
        p, r, f1 = evaluate_retrieval_f1(plan, kb, docs, gold, ids["other"])
        assert (p, r, f1) == (0.5, 0.5, 0.5)

    def test_retrieval_empty_retrieved_warns_zero(self):
        plan, kb, ids = _labeling_plan({"d0": "other", "d1": "other", "z": "r"})
        gold = [(ids["d0"], ids["r"])]
        with pytest.warns(UserWarning):
            p, r, f1 = evaluate_retrieval_f1(
                plan, kb, [ids["d0"], ids["d1"]], gold, ids["other"])
        assert (p, r, f1) == (0.0, 0.0, 0.0)


class TestArtifacts:
    def test_history_csv_roundtrip(self, tmp_path):
        bundle = _supervised_bundle(docs=16)
        heads, _ = model.build_model(bundle, [])
        cfg = TrainConfig(epochs=3, batch_size=8, lr=0.05, seed=0)
        _, history = train(heads, bundle.kb, cfg)
        path = tmp_path / "history.csv"
        training.save_history_csv(history, path)
        with open(path, newline="") as f:
            rows = list(csv.DictReader(f))
        assert len(rows) == len(history)
        assert rows[0]["head"] == history[0]["head"]
        assert float(rows[0]["loss"]) == history[0]["loss"]

    def test_checkpoint_reproduces_metrics_bitwise(self, tmp_path):
        bundle = _supervised_bundle(docs=20)
        heads, plan = model.build_model(bundle, [])
        cfg = TrainConfig(epochs=20, batch_size=8, lr=0.05, seed=0)
        train(heads, bundle.kb, cfg)
        pairs = bundle.pairs(bundle.train)
        acc = evaluate_accuracy(plan, bundle.kb, pairs)
        path = tmp_path / "ckpt.tsv"
        training.save_checkpoint(bundle.kb, path)

        fresh = _supervised_bundle(docs=20)
        heads2, plan2 = model.build_model(fresh, [])
        apply_checkpoint(fresh.kb, path)
        assert np.array_equal(fresh.kb.get_param_vector(),
                              bundle.kb.get_param_vector())
        assert evaluate_accuracy(plan2, fresh.kb, pairs) == acc
