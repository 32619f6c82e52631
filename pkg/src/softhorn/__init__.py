"""Differentiable chain Horn rules with entropic SSL constraint templates."""

__version__ = "0.1.0"

from .kb import HIGH, LOW, InitSpec, KnowledgeBase, Relation, SymbolTable
from .rules import (
    Atom,
    Program,
    Rule,
    apply_directives,
    format_program,
    parse_program,
    validate_program,
)
from .compiler import (
    Plan,
    ProofTrace,
    compile_plan,
    dump_plan,
    enumerate_proofs,
    evaluate,
    parse_plan,
    proof_scores,
    support_mask,
)
from .autodiff import (
    EntropyPair,
    cross_entropy_loss,
    forward_backward,
    grad_check,
    softmax_masked,
    tsallis_entropy_pair,
)
from .training import (
    LossHead,
    TrainConfig,
    TrainingExample,
    evaluate_accuracy,
    evaluate_retrieval_f1,
    total_loss,
    train,
)
from .templates import ConstraintSpec
from .bayesopt import GPSurrogate, TuneSpace, expected_improvement, gp_posterior, tune
from .data import (
    DatasetBundle,
    generate_synthetic,
    load_citation_dataset,
    load_examples_tsv,
    make_split,
)
from .model import BASE_PROGRAM, build_model
from .estimator import EntropicRuleClassifier

__all__ = [
    "HIGH",
    "LOW",
    "InitSpec",
    "KnowledgeBase",
    "Relation",
    "SymbolTable",
    "Atom",
    "Program",
    "Rule",
    "apply_directives",
    "format_program",
    "parse_program",
    "validate_program",
    "Plan",
    "ProofTrace",
    "compile_plan",
    "dump_plan",
    "enumerate_proofs",
    "evaluate",
    "parse_plan",
    "proof_scores",
    "support_mask",
    "EntropyPair",
    "cross_entropy_loss",
    "forward_backward",
    "grad_check",
    "softmax_masked",
    "tsallis_entropy_pair",
    "LossHead",
    "TrainConfig",
    "TrainingExample",
    "evaluate_accuracy",
    "evaluate_retrieval_f1",
    "total_loss",
    "train",
    "ConstraintSpec",
    "GPSurrogate",
    "TuneSpace",
    "expected_improvement",
    "gp_posterior",
    "tune",
    "DatasetBundle",
    "generate_synthetic",
    "load_citation_dataset",
    "load_examples_tsv",
    "make_split",
    "BASE_PROGRAM",
    "build_model",
    "EntropicRuleClassifier",
]
