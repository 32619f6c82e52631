"""Scikit-learn estimator facade over the rule engine.

``EntropicRuleClassifier`` is a linear bag-of-features classifier trained
through the differentiable rule engine, with optional entropic SSL
constraints over unlabeled rows (marked ``y == -1``) and an optional
neighbor graph.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import model, training
from .data import FEATURE_REL, NEAR_REL, DatasetBundle
from .errors import ConfigError
from .kb import KnowledgeBase
from .templates import ConstraintSpec

_NETWORK = {"nber": "NBER", "lper": "LPER", "colper": "COLPER"}


class EntropicRuleClassifier(BaseEstimator, ClassifierMixin):
    """Semi-supervised linear classifier with entropic constraint heads.

    Parameters
    ----------
    constraints : tuple of str
        Any of ``"er"``, ``"nber"``, ``"lper"``, ``"colper"``.  Network
        constraints require an ``adjacency`` matrix passed to :meth:`fit`.
    er_weight, nber_weight, lper_weight, colper_weight : float
        Loss-combination weights for the corresponding heads.
    depth : int
        Unroll depth for the recursive similarity constraints.
    epochs, batch_size, lr, optimizer, seed : training configuration.
    """

    def __init__(self, constraints=("er",), er_weight=1.0, nber_weight=0.3,
                 lper_weight=0.3, colper_weight=0.3, depth=3, epochs=60,
                 batch_size=32, lr=0.05, optimizer="adam", seed=0):
        self.constraints = constraints
        self.er_weight = er_weight
        self.nber_weight = nber_weight
        self.lper_weight = lper_weight
        self.colper_weight = colper_weight
        self.depth = depth
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.optimizer = optimizer
        self.seed = seed

    def _specs(self):
        weights = {
            "er": self.er_weight,
            "nber": self.nber_weight,
            "lper": self.lper_weight,
            "colper": self.colper_weight,
        }
        specs = []
        for name in self.constraints:
            key = name.lower()
            if key == "er":
                specs.append(ConstraintSpec("ER", weight=weights["er"]))
            elif key in _NETWORK:
                specs.append(
                    ConstraintSpec(_NETWORK[key], weight=weights[key], depth=self.depth)
                )
            else:
                raise ConfigError(f"unknown constraint {name!r}")
        return specs

    def fit(self, X, y, adjacency=None):
        """Fit on rows of nonnegative feature weights.

        Rows with ``y == -1`` are treated as unlabeled and drive the
        entropic constraint heads.
        """
        X, y = check_X_y(X, y, accept_sparse="csr")
        X = sp.csr_matrix(X, dtype=np.float64)
        if (X.data < 0).any():
            raise ValueError("feature weights must be nonnegative")
        y = np.asarray(y)
        labeled = y != -1
        if not labeled.any():
            raise ValueError("need at least one labeled row (y != -1)")
        self.classes_ = np.unique(y[labeled])
        class_index = {c: i for i, c in enumerate(self.classes_)}
        specs = self._specs()
        needs_graph = any(s.kind in ("NBER", "LPER", "COLPER") for s in specs)
        if needs_graph and adjacency is None:
            raise ConfigError("network constraints require an adjacency matrix")

        kb = KnowledgeBase()
        n, d = X.shape
        label_ids = [kb.intern(f"label::{c}") for c in self.classes_]
        feature_ids = [kb.intern(f"feat::{j}") for j in range(d)]
        doc_ids = [kb.intern(f"doc::{i}") for i in range(n)]
        rows = X.tocoo()
        row_sums = np.asarray(X.sum(axis=1)).ravel()
        for i, j, w in zip(rows.row, rows.col, rows.data):
            kb.add_fact(FEATURE_REL, doc_ids[i], feature_ids[j], w / row_sums[i])
        if adjacency is not None:
            adj = sp.coo_matrix(adjacency)
            for i, j in zip(adj.row, adj.col):
                if i != j:
                    kb.add_fact(NEAR_REL, doc_ids[i], doc_ids[j], 1.0)
                    kb.add_fact(NEAR_REL, doc_ids[j], doc_ids[i], 1.0)
            for dId in doc_ids:
                kb.add_fact(NEAR_REL, dId, dId, 1.0)

        doc_labels = {
            doc_ids[i]: label_ids[class_index[y[i]]]
            for i in range(n)
            if labeled[i]
        }
        bundle = DatasetBundle(
            kb=kb,
            docs=doc_ids,
            doc_labels=doc_labels,
            label_ids=label_ids,
            feature_ids=feature_ids,
            train=[doc_ids[i] for i in range(n) if labeled[i]],
            unlabeled=[doc_ids[i] for i in range(n) if not labeled[i]],
        )
        bundle.define_domains()
        heads, predict_plan = model.build_model(
            bundle, specs, seed=self.seed, default_depth=self.depth
        )
        config = training.TrainConfig(
            epochs=self.epochs, batch_size=self.batch_size, lr=self.lr,
            optimizer=self.optimizer, seed=self.seed,
        )
        _, self.history_ = training.train(heads, kb, config)

        rel = kb.relations["indicates"]
        W = np.zeros((d, len(self.classes_)))
        feat_pos = {fid: j for j, fid in enumerate(feature_ids)}
        label_pos = {lid: k for k, lid in enumerate(label_ids)}
        for h, t, v in zip(rel.rows, rel.cols, rel.vals):
            W[feat_pos[int(h)], label_pos[int(t)]] = v
        self.coef_ = W
        self.n_features_in_ = d
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, accept_sparse="csr")
        X = sp.csr_matrix(X, dtype=np.float64)
        sums = np.asarray(X.sum(axis=1)).ravel()
        sums[sums == 0] = 1.0
        Xn = sp.diags(1.0 / sums) @ X
        return np.asarray(Xn @ self.coef_)

    def predict_proba(self, X):
        scores = self.decision_function(X)
        e = np.exp(scores - scores.max(axis=1, keepdims=True))
        return e / e.sum(axis=1, keepdims=True)

    def predict(self, X):
        scores = self.decision_function(X)
        return self.classes_[scores.argmax(axis=1)]
