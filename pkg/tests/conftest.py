"""Shared fixtures: the worked toy KB, rule corpora, and small builders."""

import numpy as np
import pytest

from softhorn import compiler, rules
from softhorn.kb import InitSpec, KnowledgeBase


# The two-feature / two-label toy classifier: x1 has features pars (0.6) and
# lstm (0.4); pars indicates accept (0.2) and lstm indicates reject (0.3).
TOY_FACTS = [
    ("hasFeature", "x1", "pars", 0.6),
    ("hasFeature", "x1", "lstm", 0.4),
    ("indicates", "pars", "accept", 0.2),
    ("indicates", "lstm", "reject", 0.3),
]

PREDICT_RULE = "predict(X,Y) :- hasFeature(X,F), indicates(F,Y).\n"
PREDICT_SOFTMAX = "#softmax predict\n" + PREDICT_RULE

ER_RULES = (
    "#builtin entropy\n"
    "predictionHasEntropy(X,H) :- predict(X,Y), entropy(Y,H).\n"
)

CT_RULES = """\
#builtin entropy
predict1(X,Y) :- hasFeature1(X,F), indicates1(F,Y).
predict2(X,Y) :- hasFeature2(X,F), indicates2(F,Y).
predict(X,Y) :- predict1(X,Y).
predict(X,Y) :- predict2(X,Y).
predictionHasEntropy(X,H) :- predict(X,Y), entropy(Y,H).
"""

CT_TYPED_RULES = """\
#builtin entropy
predictR(X,R) :- hasFeatureR(X,F), indicatesR(F,R).
predictT(X,T) :- hasFeatureT(X,F), indicatesT(F,T).
predict(X,T) :- predictT(X,T).
predict(X,T) :- predictR(X,R), hasType(R,T).
predictionHasEntropy(X,H) :- predict(X,Y), entropy(Y,H).
"""

NBER_RULES = (
    "#builtin entropy\n" + PREDICT_RULE +
    "neighborPredictionsHaveEntropy(X1,H) :- near(X1,X2), predict(X2,Y2), entropy(Y2,H).\n"
)

LPER_RULES = (
    "#builtin entropy\n#maxdepth sim 3\n" + PREDICT_RULE +
    "sim(X1,X3) :- near(X1,X3).\n"
    "sim(X1,X3) :- near(X1,X2), sim(X2,X3).\n"
    "nearbyPredictionsHaveEntropy(X1,H) :- sim(X1,X3), predict(X3,Y3), entropy(Y3,H).\n"
)

COLPER_RULES = (
    "#builtin entropy\n#maxdepth sim 3\n" + PREDICT_RULE +
    "sim(X1,X3) :- near(X1,X3).\n"
    "sim(X1,X3) :- near(X1,Z), near(Z,X2), sim(X2,X3).\n"
    "nearbyPredictionsHaveEntropy(X1,H) :- sim(X1,X3), predict(X3,Y3), entropy(Y3,H).\n"
)

PAIR_RULES = (
    "#builtin entropy\n" + PREDICT_RULE +
    "pairPredictionsHaveEntropy(P,H) :- hasExample(P,X1), predict(X1,Y), entropy(Y,H).\n"
)

SET_RULES = (
    "#builtin entropy\n#maxdepth hasExampleSet 3\n" + PREDICT_RULE +
    "hasExampleSet(P,X2) :- hasExample(P,X2).\n"
    "hasExampleSet(P,X2) :- hasExample(P,X1), inPair(X1,P2), hasExampleSet(P2,X2).\n"
    "setPredictionsHaveEntropy(P,H) :- hasExampleSet(P,X2), predict(X2,Y), entropy(Y,H).\n"
)

# Every rule family from the worked examples, parseable as one corpus (the
# per-family texts above are used where validation against a KB is needed).
RULE_CORPUS = "\n".join([
    PREDICT_SOFTMAX,
    ER_RULES,
    "predict1(X,Y) :- hasFeature1(X,F), indicates1(F,Y).",
    "predict2(X,Y) :- hasFeature2(X,F), indicates2(F,Y).",
    "merged(X,Y) :- predict1(X,Y).",
    "merged(X,Y) :- predict2(X,Y).",
    "typed(X,T) :- predictR(X,R), hasType(R,T).",
    "neighborPredictionsHaveEntropy(X1,H) :- near(X1,X2), predict(X2,Y2), entropy(Y2,H).",
    "#maxdepth sim 3",
    "sim(X1,X3) :- near(X1,X3).",
    "sim(X1,X3) :- near(X1,X2), sim(X2,X3).",
    "cosim(X1,X3) :- near(X1,Z), near(Z,X2), cosim2(X2,X3).",
    "cosim2(X1,X3) :- near(X1,X3).",
    "nearbyPredictionsHaveEntropy(X1,H) :- sim(X1,X3), predict(X3,Y3), entropy(Y3,H).",
    "pairPredictionsHaveEntropy(P,H) :- hasExample(P,X1), predict(X1,Y), entropy(Y,H).",
    "#maxdepth hasExampleSet 3",
    "hasExampleSet(P,X2) :- hasExample(P,X2).",
    "hasExampleSet(P,X2) :- hasExample(P,X1), inPair(X1,P2), hasExampleSet(P2,X2).",
    "setPredictionsHaveEntropy(P,H) :- hasExampleSet(P,X2), predict(X2,Y), entropy(Y,H).",
]) + "\n"


def build_toy_kb(trainable=False, freeze=True):
    """The toy classifier KB; optionally with a trainable indicates block."""
    kb = KnowledgeBase()
    names = {}
    for rel, h, t, w in TOY_FACTS:
        if not (trainable and rel == "indicates"):
            kb.add_fact_named(rel, h, t, w)
        names.setdefault(h, kb.intern(h))
        names.setdefault(t, kb.intern(t))
    if trainable:
        kb.define_domain("features", [names["pars"], names["lstm"]])
        kb.define_domain("labels", [names["accept"], names["reject"]])
        kb.declare_trainable("indicates", kb.domains["features"],
                             kb.domains["labels"], InitSpec("zeros"))
    if freeze:
        kb.freeze()
    names["high"] = 0
    names["low"] = 1
    return kb, names


def compile_toy(kb, softmax=False):
    text = PREDICT_SOFTMAX if softmax else PREDICT_RULE
    vp = rules.validate_program(rules.parse_program(text), kb)
    return compiler.compile_plan(vp, "predict", kb)


@pytest.fixture
def toy_kb():
    return build_toy_kb()


@pytest.fixture
def toy_plan(toy_kb):
    kb, names = toy_kb
    return compile_toy(kb), kb, names


@pytest.fixture
def rng():
    return np.random.default_rng(0)
