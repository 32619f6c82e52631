"""Multi-head weighted loss assembly, minibatch training, and metrics.

The total objective is the supervised head's mean cross-entropy plus a
nonnegative-weighted sum of the constraint heads' mean cross-entropies.
Each head cycles through its own example stream independently; one epoch is
enough steps to cover the largest active head once.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import autodiff, compiler
from .errors import ConfigError, DivergenceError, OffSupportWarning


@dataclass(frozen=True)
class TrainingExample:
    predicate: str
    query: int
    target: int


class LossHead:
    """One (plan, example set, weight) contribution to the total loss."""

    def __init__(self, name, plan, examples, weight=1.0):
        if weight < 0:
            raise ConfigError(f"head {name!r} has negative weight {weight}")
        self.name = name
        self.plan = plan
        self.examples = list(examples)
        self.weight = float(weight)

    def arrays(self):
        q = np.array([e.query for e in self.examples], dtype=np.int64)
        t = np.array([e.target for e in self.examples], dtype=np.int64)
        return q, t


@dataclass
class TrainConfig:
    epochs: int = 300
    batch_size: int = 32
    lr: float = 0.01
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    patience: int = 20

    def __post_init__(self):
        if self.epochs <= 0 or self.batch_size <= 0 or self.lr <= 0:
            raise ConfigError("epochs, batch_size, and lr must be positive")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.patience <= 0:
            raise ConfigError("patience must be positive")


def head_loss(head, kb):
    """Mean cross-entropy over the head's full example set (0 if empty)."""
    if not head.examples:
        return 0.0
    q, t = head.arrays()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", OffSupportWarning)
        loss, *_ = autodiff.batch_loss(head.plan, kb, q, t)
    return loss


def total_loss(heads, kb):
    """Weighted sum of per-head mean losses."""
    return sum(h.weight * head_loss(h, kb) for h in heads)


class _HeadStream:
    """Endless shuffled minibatch stream over one head's examples."""

    def __init__(self, head, batch_size, rng):
        self.queries, self.targets = head.arrays()
        self.batch_size = batch_size
        self.rng = rng
        self.order = np.zeros(0, dtype=np.int64)
        self.pos = 0

    def next_batch(self):
        if self.pos >= len(self.order):
            self.order = self.rng.permutation(len(self.queries))
            self.pos = 0
        sel = self.order[self.pos : self.pos + self.batch_size]
        self.pos += len(sel)
        return self.queries[sel], self.targets[sel]


class _Adam:
    def __init__(self, config, dim):
        self.config = config
        self.m = np.zeros(dim)
        self.v = np.zeros(dim)
        self.t = 0

    def step(self, params, grad):
        c = self.config
        self.t += 1
        self.m = c.beta1 * self.m + (1 - c.beta1) * grad
        self.v = c.beta2 * self.v + (1 - c.beta2) * grad * grad
        mhat = self.m / (1 - c.beta1**self.t)
        vhat = self.v / (1 - c.beta2**self.t)
        return params - c.lr * mhat / (np.sqrt(vhat) + c.eps)


class _Sgd:
    def __init__(self, config, dim):
        self.config = config

    def step(self, params, grad):
        return params - self.config.lr * grad


def train(heads, kb, config, val=None, eval_head=None):
    """Run minibatch gradient descent on the weighted multi-head objective.

    ``val`` is an optional list of (query, gold) pairs scored each epoch on
    ``eval_head`` (default: the first head); the returned parameter snapshot
    is the one with the best validation accuracy, with early stopping after
    ``config.patience`` epochs without improvement.

    Returns ``(params, history)`` with the snapshot already loaded into the
    KB.  History rows are dicts with epoch, head, loss, and val_accuracy.
    """
    if not kb.frozen:
        raise ConfigError("knowledge base must be frozen before training")
    eval_head = eval_head or heads[0]
    active = [h for h in heads if h.weight > 0 and h.examples]
    streams = [
        _HeadStream(h, config.batch_size, np.random.default_rng([config.seed, i]))
        for i, h in enumerate(heads)
        if h.weight > 0 and h.examples
    ]
    steps = max(
        (int(np.ceil(len(h.examples) / config.batch_size)) for h in active), default=1
    )
    opt_cls = _Adam if config.optimizer == "adam" else _Sgd
    params = kb.get_param_vector()
    opt = opt_cls(config, len(params))

    history = []
    best_params = params.copy()
    best_acc = -1.0
    stale = 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", OffSupportWarning)
        for epoch in range(config.epochs):
            sums = np.zeros(len(active))
            for _ in range(steps):
                grad = np.zeros_like(params)
                for i, (head, stream) in enumerate(zip(active, streams)):
                    q, t = stream.next_batch()
                    loss, pgrads, _ = autodiff.forward_backward(head.plan, kb, q, t)
                    sums[i] += loss
                    grad += head.weight * _flatten_grads(kb, pgrads)
                params = opt.step(params, grad)
                kb.set_param_vector(params)
            epoch_losses = sums / steps
            total = float(
                sum(h.weight * l for h, l in zip(active, epoch_losses))
            )
            if not np.isfinite(total):
                raise DivergenceError(f"total loss diverged at epoch {epoch}", epoch=epoch)
            acc = float("nan")
            if val is not None:
                acc = evaluate_accuracy(eval_head.plan, kb, val)
            for h, l in zip(active, epoch_losses):
                history.append(
                    {"epoch": epoch, "head": h.name, "loss": float(l), "val_accuracy": acc}
                )
            history.append(
                {"epoch": epoch, "head": "total", "loss": total, "val_accuracy": acc}
            )
            if val is not None:
                if acc > best_acc:
                    best_acc = acc
                    best_params = params.copy()
                    stale = 0
                else:
                    stale += 1
                    if stale >= config.patience:
                        break
    if val is not None:
        params = best_params
    kb.set_param_vector(params)
    return params, history


def _flatten_grads(kb, pgrads):
    rels = kb.trainable_relations()
    if not rels:
        return np.zeros(0)
    return np.concatenate([pgrads[r.name] for r in rels])


def predict_labels(plan, kb, queries):
    """Argmax prediction per query (ties break to the lowest entity id);
    -1 marks queries with empty structural support."""
    values, supports = compiler.forward(plan, kb, np.asarray(queries, dtype=np.int64))
    out = values[plan.output]
    sup = supports[plan.output]
    labels = np.where(sup.any(axis=1), out.argmax(axis=1), -1)
    return labels


def evaluate_accuracy(plan, kb, test):
    """Fraction of test (query, gold) pairs predicted correctly.

    Queries with empty support count as incorrect.
    """
    if not len(test):
        raise ConfigError("test set is empty")
    queries = np.array([q for q, _ in test], dtype=np.int64)
    gold = np.array([g for _, g in test], dtype=np.int64)
    labels = predict_labels(plan, kb, queries)
    return float((labels == gold).mean())


def evaluate_retrieval_f1(plan, kb, test_docs, gold_pairs, other_label):
    """Retrieval-style precision/recall/F1.

    Predictions equal to ``other_label`` are dropped from the retrieved set;
    the rest are compared against the gold (doc, label) pairs.
    """
    queries = np.asarray(test_docs, dtype=np.int64)
    labels = predict_labels(plan, kb, queries)
    retrieved = {
        (int(q), int(l)) for q, l in zip(queries, labels) if l >= 0 and l != other_label
    }
    gold = {(int(q), int(l)) for q, l in gold_pairs}
    if not retrieved:
        warnings.warn("empty retrieved set; precision defined as 0", stacklevel=2)
        return 0.0, 0.0, 0.0
    correct = len(retrieved & gold)
    precision = correct / len(retrieved)
    recall = correct / len(gold) if gold else 0.0
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return precision, recall, f1


def save_history_csv(history, path):
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.DictWriter(f, fieldnames=["epoch", "head", "loss", "val_accuracy"])
        w.writeheader()
        for row in history:
            w.writerow(row)


def save_checkpoint(kb, path):
    """Write trainable relation weights as a facts TSV."""
    names = [r.name for r in kb.trainable_relations()]
    kb.save_facts_tsv(path, relation_names=names)
