"""Dataset ingestion, split construction, and synthetic data generation.

Citation datasets follow the LINQS layout: a ``.content`` file with
``<doc-id> <f_1 ... f_k> <label>`` lines and a ``.cites`` file with
``<cited-id> <citing-id>`` lines.  Feature rows are L1-normalized; the
``near`` relation is made symmetric over citation edges and reflexive for
every document.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import IngestError, SplitError
from .kb import KnowledgeBase
from .training import TrainingExample

FEATURE_REL = "hasFeature"
NEAR_REL = "near"


@dataclass
class DatasetBundle:
    kb: KnowledgeBase
    docs: list  # entity ids
    doc_labels: dict  # doc id -> label id (ground truth where known)
    label_ids: list
    feature_ids: list
    train: list = field(default_factory=list)  # doc ids
    val: list = field(default_factory=list)
    test: list = field(default_factory=list)
    unlabeled: list = field(default_factory=list)

    def pairs(self, docs):
        return [(d, self.doc_labels[d]) for d in docs]

    def train_examples(self, predicate="predict"):
        return [TrainingExample(predicate, d, self.doc_labels[d]) for d in self.train]

    def define_domains(self):
        self.kb.define_domain("docs", self.docs)
        self.kb.define_domain("features", self.feature_ids)
        self.kb.define_domain("labels", self.label_ids)
        return self


def _add_feature_row(kb, doc, feature_ids, weights):
    total = float(np.sum(weights))
    for fid, w in zip(feature_ids, weights):
        if w != 0.0:
            kb.add_fact(FEATURE_REL, doc, fid, float(w) / total)


def load_citation_dataset(content_path, cites_path):
    """Build a pre-split bundle from LINQS-style content/cites files."""
    kb = KnowledgeBase()
    docs = []
    doc_labels = {}
    feature_ids = None
    label_ids = {}
    dropped_docs = 0
    with open(content_path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            parts = raw.split()
            if not parts:
                continue
            if len(parts) < 3:
                raise IngestError("content line needs id, features, label", line=lineno)
            doc_name, cols, label = parts[0], parts[1:-1], parts[-1]
            if feature_ids is None:
                feature_ids = [kb.intern(f"feat::{j}") for j in range(len(cols))]
            elif len(cols) != len(feature_ids):
                raise IngestError(
                    f"expected {len(feature_ids)} feature columns, got {len(cols)}",
                    line=lineno,
                )
            try:
                weights = np.array([float(c) for c in cols])
            except ValueError:
                raise IngestError("non-numeric feature column", line=lineno) from None
            if np.any(weights < 0):
                raise IngestError("negative feature weight", line=lineno)
            if weights.sum() == 0:
                dropped_docs += 1
                warnings.warn(f"document {doc_name!r} has no features; dropped", stacklevel=2)
                continue
            doc = kb.intern(f"doc::{doc_name}")
            docs.append(doc)
            if label not in label_ids:
                label_ids[label] = kb.intern(f"label::{label}")
            doc_labels[doc] = label_ids[label]
            _add_feature_row(kb, doc, feature_ids, weights)

    known = set(docs)
    dropped_edges = 0
    with open(cites_path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            parts = raw.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise IngestError("cites line needs exactly two ids", line=lineno)
            a = f"doc::{parts[0]}"
            b = f"doc::{parts[1]}"
            if a not in kb.entities or b not in kb.entities:
                dropped_edges += 1
                continue
            ai, bi = kb.entities.id(a), kb.entities.id(b)
            if ai not in known or bi not in known:
                dropped_edges += 1
                continue
            kb.add_fact(NEAR_REL, ai, bi, 1.0)
            kb.add_fact(NEAR_REL, bi, ai, 1.0)
    for d in docs:
        kb.add_fact(NEAR_REL, d, d, 1.0)
    if dropped_edges:
        warnings.warn(f"dropped {dropped_edges} citation(s) to unknown documents",
                      stacklevel=2)

    bundle = DatasetBundle(
        kb=kb,
        docs=docs,
        doc_labels=doc_labels,
        label_ids=sorted(label_ids.values()),
        feature_ids=list(feature_ids or []),
    )
    return bundle.define_domains()


def make_split(bundle, per_class_train, test_n, val_fraction=0.25, seed=0):
    """Stratified labeled draw + reserved test set; the rest is unlabeled."""
    rng = np.random.default_rng(seed)
    by_class = {}
    for d in bundle.docs:
        by_class.setdefault(bundle.doc_labels[d], []).append(d)
    draw = []
    rest = []
    for label in sorted(by_class):
        members = np.array(sorted(by_class[label]))
        if len(members) < per_class_train:
            raise SplitError(
                f"class {bundle.kb.entities.name(label)!r} has only {len(members)} "
                f"examples, need {per_class_train}"
            )
        perm = rng.permutation(len(members))
        draw.extend(members[perm[:per_class_train]].tolist())
        rest.extend(members[perm[per_class_train:]].tolist())
    rest_perm = rng.permutation(len(rest))
    rest = [rest[i] for i in rest_perm]
    if len(rest) < test_n:
        raise SplitError(f"only {len(rest)} examples left for a test set of {test_n}")
    test = sorted(rest[:test_n])
    unlabeled = sorted(rest[test_n:])
    n_val = int(round(val_fraction * len(draw)))
    draw_perm = rng.permutation(len(draw))
    draw = [draw[i] for i in draw_perm]
    val = sorted(draw[:n_val])
    train = sorted(draw[n_val:])
    bundle.train, bundle.val, bundle.test, bundle.unlabeled = train, val, test, unlabeled
    return bundle


def generate_synthetic(classes, vocab_per_class, ambiguity, docs, graph_homophily,
                       seed=0, tokens_per_doc=6, neighbors_per_doc=2):
    """Synthetic labeled corpus with class vocabularies, a shared ambiguous
    vocabulary, and a homophilous neighbor graph.

    Tokens are drawn from the document's class vocabulary with probability
    ``1 - ambiguity`` and from the shared pool otherwise.  Each ``near`` edge
    connects same-class documents with probability ``graph_homophily``.
    """
    if not (0.0 <= ambiguity <= 1.0 and 0.0 <= graph_homophily <= 1.0):
        raise ValueError("ambiguity and graph_homophily must be in [0, 1]")
    rng = np.random.default_rng(seed)
    kb = KnowledgeBase()
    label_ids = [kb.intern(f"label::c{c}") for c in range(classes)]
    class_vocab = [
        [kb.intern(f"tok::c{c}::{k}") for k in range(vocab_per_class)]
        for c in range(classes)
    ]
    shared_vocab = [kb.intern(f"tok::shared::{k}") for k in range(vocab_per_class)]
    doc_ids = [kb.intern(f"doc::{i}") for i in range(docs)]
    doc_class = rng.integers(0, classes, size=docs)

    doc_labels = {}
    for d, cls in zip(doc_ids, doc_class):
        doc_labels[d] = label_ids[cls]
        counts = {}
        for _ in range(tokens_per_doc):
            if rng.random() < ambiguity:
                tok = shared_vocab[rng.integers(len(shared_vocab))]
            else:
                tok = class_vocab[cls][rng.integers(vocab_per_class)]
            counts[tok] = counts.get(tok, 0) + 1
        total = sum(counts.values())
        for tok, c in counts.items():
            kb.add_fact(FEATURE_REL, d, tok, c / total)

    by_class = {c: np.flatnonzero(doc_class == c) for c in range(classes)}
    for i, (d, cls) in enumerate(zip(doc_ids, doc_class)):
        for _ in range(neighbors_per_doc):
            if rng.random() < graph_homophily:
                pool = by_class[cls]
            else:
                other = (cls + 1 + rng.integers(classes - 1)) % classes if classes > 1 else cls
                pool = by_class[other]
            if len(pool) < 2 and pool[0] == i:
                continue
            j = i
            while j == i:
                j = int(pool[rng.integers(len(pool))])
            kb.add_fact(NEAR_REL, d, doc_ids[j], 1.0)
            kb.add_fact(NEAR_REL, doc_ids[j], d, 1.0)
    for d in doc_ids:
        kb.add_fact(NEAR_REL, d, d, 1.0)

    feature_ids = [t for vocab in class_vocab for t in vocab] + shared_vocab
    bundle = DatasetBundle(
        kb=kb,
        docs=doc_ids,
        doc_labels=doc_labels,
        label_ids=label_ids,
        feature_ids=feature_ids,
    )
    return bundle.define_domains()


def load_examples_tsv(path, kb):
    """Read ``predicate<TAB>query<TAB>target`` lines, interning entities."""
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise IngestError("expected 3 tab-separated fields", line=lineno)
            out.append(
                TrainingExample(parts[0], kb.intern(parts[1]), kb.intern(parts[2]))
            )
    return out
