"""Generators for the entropic SSL constraint heads.

Each emitter returns ``(rule_text, examples)`` (plus any auxiliary facts it
adds to the KB in place).  The rule text is meant to be concatenated with the
base classifier program and compiled per head; examples all target ``low``
on the constraint's head predicate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
import warnings

from .errors import ConfigError, UnknownSymbolError
from .kb import LOW
from .training import TrainingExample

ER_HEAD = "predictionHasEntropy"
NBER_HEAD = "neighborPredictionsHaveEntropy"
LP_HEAD = "nearbyPredictionsHaveEntropy"
PAIR_HEAD = "pairPredictionsHaveEntropy"
SET_HEAD = "setPredictionsHaveEntropy"

NETWORK_KINDS = ("NBER", "LPER", "COLPER")
GROUP_KINDS = ("NBER_PAIR", "COLPER_SET")


@dataclass
class ConstraintSpec:
    """Configuration record for one SSL constraint head."""

    kind: str  # ER | CT | CT_TYPED | NBER | LPER | COLPER | NBER_PAIR | COLPER_SET
    weight: float = 1.0
    near: str = "near"
    depth: int = 3
    has_type: list = field(default_factory=list)  # (relation-const, type-const) pairs
    group_key: str = "document"
    max_unlabeled: int | None = None
    feature_rels: tuple = ("hasFeature1", "hasFeature2")  # CT two-view only
    label_domain: str = "labels"  # CT two-view only

    def __post_init__(self):
        if self.kind in ("LPER", "COLPER", "COLPER_SET") and self.depth < 1:
            raise ConfigError(f"{self.kind} requires depth >= 1")
        if self.has_type and self.kind != "CT_TYPED":
            raise ConfigError("hasType facts are only valid for CT_TYPED")


def _low_examples(kb, head, entities):
    low = kb.entities.id(LOW)
    return [TrainingExample(head, e, low) for e in entities]


def emit_er(kb, unlabeled, predict="predict", head=ER_HEAD):
    """Entropic regularization: one rule, one low-entropy example per
    unlabeled entity."""
    rule_text = f"{head}(X,H) :- {predict}(X,Y), entropy(Y,H).\n#builtin entropy\n"
    return rule_text, _low_examples(kb, head, unlabeled)


def emit_cotrain_views(kb, unlabeled, feature_rels, label_domain, init="zeros",
                       head=ER_HEAD):
    """Two-view co-training: per-view classifiers, disjunctive merge, and an
    agreement (low-entropy) head over the merged prediction."""
    rel1, rel2 = feature_rels
    for r in (rel1, rel2):
        if r not in kb.relations:
            raise UnknownSymbolError(f"feature relation {r!r} not in KB")
    lines = [
        f"#trainable indicates1 {rel1}_features {label_domain} init={init}",
        f"#trainable indicates2 {rel2}_features {label_domain} init={init}",
        "#builtin entropy",
        "#softmax predict1",
        "#softmax predict2",
        f"predict1(X,Y) :- {rel1}(X,F), indicates1(F,Y).",
        f"predict2(X,Y) :- {rel2}(X,F), indicates2(F,Y).",
        "predict(X,Y) :- predict1(X,Y).",
        "predict(X,Y) :- predict2(X,Y).",
        f"{head}(X,H) :- predict(X,Y), entropy(Y,H).",
    ]
    return "\n".join(lines) + "\n", _low_examples(kb, head, unlabeled)


def emit_cotrain_typed(kb, unlabeled, has_type_facts, predict_r="predictR",
                       predict_t="predictT", head=ER_HEAD):
    """Typed co-training: merge a relation classifier and a type classifier
    through hasType facts, then constrain the merged entropy.

    ``has_type_facts`` are (relation-constant, type-constant) name pairs;
    they are added to the KB as weight-1 facts.
    """
    for rel_const, type_const in has_type_facts:
        kb.add_fact_named("hasType", rel_const, type_const, 1.0)
    lines = [
        "#builtin entropy",
        f"predict(X,T) :- {predict_t}(X,T).",
        f"predict(X,T) :- {predict_r}(X,R), hasType(R,T).",
        f"{head}(X,H) :- predict(X,Y), entropy(Y,H).",
    ]
    return "\n".join(lines) + "\n", _low_examples(kb, head, unlabeled)


def emit_network(kb, kind, unlabeled, near="near", depth=3, predict="predict"):
    """Neighborhood constraints: direct neighbors (NBER), recursive
    random-walk similarity (LPER), or two-hop co-link similarity (COLPER)."""
    if kind not in NETWORK_KINDS:
        raise ConfigError(f"unknown network constraint kind {kind!r}")
    if depth < 1:
        raise ConfigError("depth must be >= 1")
    if near not in kb.relations:
        raise UnknownSymbolError(f"near relation {near!r} not in KB")
    if kind == "NBER":
        head = NBER_HEAD
        lines = [
            "#builtin entropy",
            f"{head}(X1,H) :- {near}(X1,X2), {predict}(X2,Y2), entropy(Y2,H).",
        ]
    else:
        head = LP_HEAD
        step = (
            f"sim(X1,X3) :- {near}(X1,X2), sim(X2,X3)."
            if kind == "LPER"
            else f"sim(X1,X3) :- {near}(X1,Z), {near}(Z,X2), sim(X2,X3)."
        )
        lines = [
            "#builtin entropy",
            f"#maxdepth sim {depth}",
            f"{head}(X1,H) :- sim(X1,X3), {predict}(X3,Y3), entropy(Y3,H).",
            f"sim(X1,X3) :- {near}(X1,X3).",
            step,
        ]
    return "\n".join(lines) + "\n", _low_examples(kb, head, unlabeled)


def pair_entity_name(group_key, name_i, name_j):
    a, b = sorted((name_i, name_j))
    return f"pair::{group_key}::{a}::{b}"


def emit_pair_groups(kb, kind, groups, group_key="document", depth=3,
                     predict="predict", group_cap=20, rng=None):
    """Same-prediction constraints over mention groups.

    For every pair within a group a virtual pair entity is interned with
    ``hasExample`` facts to both mentions; COLPER_SET additionally adds the
    symmetric ``inPair`` facts and the recursive example-set rules.  Groups
    above ``group_cap`` mentions are subsampled; singleton groups are skipped
    with a warning.
    """
    if kind not in GROUP_KINDS:
        raise ConfigError(f"unknown group constraint kind {kind!r}")
    colinked = kind == "COLPER_SET"
    pair_entities = []
    for group in groups:
        members = sorted(set(group))
        if len(members) < 2:
            warnings.warn(f"singleton group skipped under key {group_key!r}", stacklevel=2)
            continue
        if len(members) > group_cap:
            if rng is None:
                members = members[:group_cap]
            else:
                members = sorted(rng.choice(members, size=group_cap, replace=False))
        names = [kb.entities.name(m) for m in members]
        for (i, ni), (j, nj) in combinations(enumerate(names), 2):
            p = kb.intern(pair_entity_name(group_key, ni, nj))
            kb.add_fact("hasExample", p, members[i], 1.0)
            kb.add_fact("hasExample", p, members[j], 1.0)
            if colinked:
                kb.add_fact("inPair", members[i], p, 1.0)
                kb.add_fact("inPair", members[j], p, 1.0)
            pair_entities.append(p)
    if kind == "NBER_PAIR":
        head = PAIR_HEAD
        lines = [
            "#builtin entropy",
            f"{head}(P,H) :- hasExample(P,X1), {predict}(X1,Y), entropy(Y,H).",
        ]
    else:
        head = SET_HEAD
        lines = [
            "#builtin entropy",
            f"#maxdepth hasExampleSet {depth}",
            f"{head}(P,H) :- hasExampleSet(P,X2), {predict}(X2,Y), entropy(Y,H).",
            "hasExampleSet(P,X2) :- hasExample(P,X2).",
            "hasExampleSet(P,X2) :- hasExample(P,X1), inPair(X1,P2), hasExampleSet(P2,X2).",
        ]
    return "\n".join(lines) + "\n", _low_examples(kb, head, pair_entities)


def emit_constraint(kb, spec, unlabeled=None, groups=None, predict="predict", rng=None):
    """Dispatch on a :class:`ConstraintSpec`; returns (rule_text, examples)."""
    unlabeled = list(unlabeled or [])
    if spec.max_unlabeled is not None and len(unlabeled) > spec.max_unlabeled:
        if rng is None:
            unlabeled = unlabeled[: spec.max_unlabeled]
        else:
            unlabeled = sorted(rng.choice(unlabeled, size=spec.max_unlabeled, replace=False))
    if spec.kind == "ER":
        return emit_er(kb, unlabeled, predict=predict)
    if spec.kind == "CT":
        return emit_cotrain_views(kb, unlabeled, spec.feature_rels, spec.label_domain)
    if spec.kind == "CT_TYPED":
        return emit_cotrain_typed(kb, unlabeled, spec.has_type)
    if spec.kind in NETWORK_KINDS:
        return emit_network(kb, spec.kind, unlabeled, near=spec.near, depth=spec.depth,
                            predict=predict)
    if spec.kind in GROUP_KINDS:
        return emit_pair_groups(kb, spec.kind, groups or [], group_key=spec.group_key,
                                depth=spec.depth, predict=predict, rng=rng)
    raise ConfigError(f"unknown constraint kind {spec.kind!r}")
