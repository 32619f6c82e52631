"""Executable verification harness.

Three suites: compiled evaluation vs brute-force proof enumeration on random
chain programs, analytic vs finite-difference gradients on every plan
family, and paired synthetic runs showing the entropic constraints improve
over supervised-only training.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff, compiler, data, model, rules, templates, training
from .kb import InitSpec, KnowledgeBase
from .rules import Atom, Program, Rule
from .templates import ConstraintSpec


@dataclass
class OracleReport:
    trials: int
    max_deviation: float
    violations: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations


def _random_instance(rng):
    """Random nonnegative KB plus a random chain program over it."""
    kb = KnowledgeBase()
    n_entities = int(rng.integers(5, 21))
    ids = [kb.intern(f"e{i}") for i in range(n_entities)]
    rel_names = [f"r{k}" for k in range(int(rng.integers(1, 4)))]
    for name in rel_names:
        nnz = int(rng.integers(3, 3 * n_entities))
        for _ in range(nnz):
            h = ids[rng.integers(n_entities)]
            t = ids[rng.integers(n_entities)]
            kb.add_fact(name, h, t, float(rng.uniform(0.0, 1.0)))
    kb.freeze()

    def chain_rule(head_pred, body_preds):
        vars_ = [f"V{i}" for i in range(len(body_preds) + 1)]
        body = tuple(
            Atom(p, vars_[i], vars_[i + 1]) for i, p in enumerate(body_preds)
        )
        return Rule(Atom(head_pred, vars_[0], vars_[-1]), body)

    prog = Program(rules=[])
    n_rules = int(rng.integers(1, 5))
    # p0 always has at least one non-recursive rule; later rules may be
    # recursive or route through a helper predicate p1.
    use_helper = n_rules >= 3 and rng.random() < 0.5
    if use_helper:
        prog.rules.append(chain_rule("p1", [rel_names[rng.integers(len(rel_names))]]))
    prog.rules.append(
        chain_rule("p0", [rel_names[rng.integers(len(rel_names))]
                          for _ in range(int(rng.integers(1, 4)))])
    )
    while len(prog.rules) < n_rules:
        body = [rel_names[rng.integers(len(rel_names))]
                for _ in range(int(rng.integers(1, 3)))]
        roll = rng.random()
        if roll < 0.4:
            body.append("p0")  # recursive tail call
        elif use_helper and roll < 0.7:
            body.insert(int(rng.integers(len(body) + 1)), "p1")
        prog.rules.append(chain_rule("p0", body))
    depth = int(rng.integers(1, 4))
    prog.directives.maxdepth["p0"] = depth
    vp = rules.validate_program(prog, kb)
    return kb, vp, depth


def check_oracle_equivalence(trials=200, seed=0, tolerance=1e-9, queries_per_trial=3):
    """Compare compiled pre-normalization scores with proof-weight sums."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    violations = []
    for trial in range(trials):
        kb, vp, depth = _random_instance(rng)
        plan = compiler.compile_plan(vp, "p0", kb, default_depth=depth)
        for _ in range(queries_per_trial):
            q = int(rng.integers(2, kb.n_entities))  # skip reserved high/low
            scores = compiler.evaluate(plan, kb, [q])[0]
            proofs = compiler.enumerate_proofs(vp, kb, "p0", q, depth=depth)
            oracle = compiler.proof_scores(proofs, kb.n_entities)
            dev = float(np.abs(scores - oracle).max())
            worst = max(worst, dev)
            if dev > tolerance:
                violations.append({"trial": trial, "query": q, "deviation": dev})
    return OracleReport(trials=trials, max_deviation=worst, violations=violations)


def _gradient_fixtures(seed=0):
    """One small trainable instance per plan family; yields (name, plan, kb,
    queries, targets)."""
    rng = np.random.default_rng(seed)

    bundle = data.generate_synthetic(
        classes=2, vocab_per_class=4, ambiguity=0.4, docs=10,
        graph_homophily=0.8, seed=seed,
    )
    bundle.train = bundle.docs[:4]
    bundle.unlabeled = bundle.docs[4:]
    groups = [bundle.docs[4:7], bundle.docs[7:10]]
    specs = [
        ConstraintSpec("ER"),
        ConstraintSpec("NBER"),
        ConstraintSpec("LPER", depth=3),
        ConstraintSpec("COLPER", depth=2),
        ConstraintSpec("NBER_PAIR"),
        ConstraintSpec("COLPER_SET", depth=2),
    ]
    heads, _ = model.build_model(bundle, specs, seed=seed, groups=groups)
    bundle.kb.set_param_vector(rng.uniform(-0.5, 0.5, bundle.kb.parameter_count()))
    out = []
    for head in heads:
        q, t = head.arrays()
        out.append((head.name if head.name != "predict" else "supervised",
                    head.plan, bundle.kb, q[:3], t[:3]))

    # two-view co-training
    kb = KnowledgeBase()
    docs = [kb.intern(f"d{i}") for i in range(4)]
    f1 = [kb.intern(f"a{i}") for i in range(3)]
    f2 = [kb.intern(f"b{i}") for i in range(3)]
    labels = [kb.intern(c) for c in ("pos", "neg")]
    for d in docs:
        kb.add_fact("hasFeature1", d, f1[int(rng.integers(3))], 1.0)
        kb.add_fact("hasFeature2", d, f2[int(rng.integers(3))], 1.0)
    kb.define_domain("hasFeature1_features", f1)
    kb.define_domain("hasFeature2_features", f2)
    kb.define_domain("labels", labels)
    text, examples = templates.emit_cotrain_views(
        kb, docs, ("hasFeature1", "hasFeature2"), "labels"
    )
    program = rules.parse_program(text)
    rules.apply_directives(program, kb, seed=seed)
    kb.freeze()
    kb.set_param_vector(rng.uniform(-0.5, 0.5, kb.parameter_count()))
    vp = rules.validate_program(program, kb)
    plan = compiler.compile_plan(vp, examples[0].predicate, kb)
    q = np.array([e.query for e in examples[:3]])
    t = np.array([e.target for e in examples[:3]])
    out.append(("CT", plan, kb, q, t))
    return out


def check_gradients(seed=0, h=1e-5):
    """Finite-difference gradient check across all plan families.

    Returns a dict plan-family -> max relative error.
    """
    report = {}
    for name, plan, kb, q, t in _gradient_fixtures(seed):
        report[name] = autodiff.grad_check(plan, kb, q, t, h=h)
    return report


GAIN_TRAIN = training.TrainConfig(epochs=60, batch_size=32, lr=0.05, seed=0, patience=60)


def _gain_bundle(seed, labeled_per_class=5, unlabeled_n=500, test_n=200,
                 ambiguity=0.6, homophily=0.9, classes=2):
    docs = classes * labeled_per_class + unlabeled_n + test_n
    bundle = data.generate_synthetic(
        classes=classes, vocab_per_class=10, ambiguity=ambiguity, docs=docs,
        graph_homophily=homophily, seed=seed,
    )
    rng = np.random.default_rng(seed + 1)
    by_class = {}
    for d in bundle.docs:
        by_class.setdefault(bundle.doc_labels[d], []).append(d)
    train = []
    rest = []
    for label in sorted(by_class):
        members = by_class[label]
        perm = rng.permutation(len(members))
        train.extend(members[i] for i in perm[:labeled_per_class])
        rest.extend(members[i] for i in perm[labeled_per_class:])
    rest = [rest[i] for i in rng.permutation(len(rest))]
    bundle.train = sorted(train)
    bundle.test = sorted(rest[:test_n])
    bundle.unlabeled = sorted(rest[test_n : test_n + unlabeled_n])
    return bundle


def check_ssl_gain(seeds=10, config=GAIN_TRAIN, er_weight=1.0, nber_weight=0.3):
    """Paired synthetic runs: supervised vs +ER vs +NBER.

    Returns a report dict with per-seed accuracies and win counts.
    """
    rows = []
    for seed in range(seeds):
        bundle = _gain_bundle(seed)
        specs = [
            ConstraintSpec("ER", weight=er_weight),
            ConstraintSpec("NBER", weight=nber_weight),
        ]
        heads, predict_plan = model.build_model(bundle, specs, seed=seed)
        test_pairs = bundle.pairs(bundle.test)
        zeros = np.zeros(bundle.kb.parameter_count())
        accs = {}
        for variant, (w_er, w_nber) in {
            "supervised": (0.0, 0.0),
            "er": (er_weight, 0.0),
            "nber": (0.0, nber_weight),
        }.items():
            heads[1].weight = w_er
            heads[2].weight = w_nber
            bundle.kb.set_param_vector(zeros)
            cfg = training.TrainConfig(**{**config.__dict__, "seed": seed})
            training.train(heads, bundle.kb, cfg)
            accs[variant] = training.evaluate_accuracy(predict_plan, bundle.kb, test_pairs)
        rows.append({"seed": seed, **accs})
    report = {
        "rows": rows,
        "er_wins": sum(r["er"] > r["supervised"] for r in rows),
        "nber_wins": sum(r["nber"] > r["supervised"] for r in rows),
        "mean": {
            k: float(np.mean([r[k] for r in rows]))
            for k in ("supervised", "er", "nber")
        },
    }
    return report
