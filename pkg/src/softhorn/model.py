"""Assembly of a trainable model from a dataset bundle and constraint specs.

Each loss head gets its own program (base classifier rules plus that
constraint's rules) compiled against the shared KB, so heads never clash on
predicate names while sharing the trainable relations.
"""

from __future__ import annotations

from . import compiler, rules, templates
from .training import LossHead

BASE_PROGRAM = """\
#trainable indicates features labels init=zeros
#softmax predict
predict(X,Y) :- hasFeature(X,F), indicates(F,Y).
"""


def build_model(bundle, constraint_specs=(), base_program=BASE_PROGRAM, seed=0,
                default_depth=compiler.DEFAULT_DEPTH, groups=None, rng=None):
    """Freeze the bundle's KB and compile one plan per loss head.

    Constraint emitters run before the freeze (they may intern pair entities
    and add facts).  Returns ``(heads, predict_plan)``; the supervised head
    comes first with weight 1.
    """
    kb = bundle.kb
    base = rules.parse_program(base_program)
    emitted = []
    for spec in constraint_specs:
        text, examples = templates.emit_constraint(
            kb, spec, unlabeled=bundle.unlabeled, groups=groups, rng=rng
        )
        emitted.append((spec, text, examples))
    rules.apply_directives(base, kb, seed=seed)
    kb.freeze()

    vp = rules.validate_program(base, kb)
    predict_plan = compiler.compile_plan(vp, "predict", kb, default_depth=default_depth)
    heads = [LossHead("predict", predict_plan, bundle.train_examples(), weight=1.0)]
    for spec, text, examples in emitted:
        program = rules.parse_program(base_program + text)
        head_vp = rules.validate_program(program, kb)
        head_pred = examples[0].predicate if examples else None
        if head_pred is None:
            heads.append(LossHead(spec.kind, predict_plan, [], weight=spec.weight))
            continue
        plan = compiler.compile_plan(head_vp, head_pred, kb, default_depth=default_depth)
        heads.append(LossHead(spec.kind, plan, examples, weight=spec.weight))
    return heads, predict_plan
