"""Command-line entry point.

Subcommands: ``ingest``, ``dump-plan``, ``train``, ``eval``, ``tune``, and
``oracle-check``.  All take a YAML config file; any config key can be
overridden on the command line with ``--section.key=value``.  Exit codes:
0 success, 1 usage error, 2 data error, 3 verification failure.
"""

from __future__ import annotations

import argparse
import copy
import json
import os
import sys

import numpy as np
import yaml

from . import __version__, bayesopt, compiler, data, kb as kbmod, model, rules, training, verify
from .errors import ConfigError, SofthornError
from .templates import ConstraintSpec

DEFAULTS = {
    "seed": 0,
    "output_dir": None,  # resolved from SOFTHORN_OUTPUT_DIR or "softhorn_out"
    "target": "predict",
    "rules": None,
    "facts": [],
    "examples": None,
    "val_examples": None,
    "test_examples": None,
    "domains": {},
    "head_weights": {},
    "depth": 3,
    "dataset": {
        "content": None,
        "cites": None,
        "per_class_train": 20,
        "test_n": 1000,
        "val_fraction": 0.25,
    },
    "constraints": [],
    "train": {
        "epochs": 300,
        "batch_size": 32,
        "lr": 0.01,
        "optimizer": "adam",
        "patience": 20,
    },
    "tune": {"budget": 30, "low": 0.0, "high": 10.0, "method": "bo"},
    "oracle": {"trials": 200},
    "eval": {"mode": "accuracy", "other_label": None},
}


def _deep_merge(base, extra):
    out = copy.deepcopy(base)
    for k, v in (extra or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _apply_override(config, dotted, raw):
    value = yaml.safe_load(raw)
    node = config
    keys = dotted.split(".")
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot override through non-section key {k!r}")
    node[keys[-1]] = value


def load_config(path=None, overrides=()):
    config = copy.deepcopy(DEFAULTS)
    if path:
        with open(path, encoding="utf-8") as f:
            config = _deep_merge(config, yaml.safe_load(f) or {})
    for ov in overrides:
        if not ov.startswith("--") or "=" not in ov:
            raise ConfigError(f"bad override {ov!r}; expected --section.key=value")
        dotted, raw = ov[2:].split("=", 1)
        _apply_override(config, dotted, raw)
    if config["output_dir"] is None:
        config["output_dir"] = os.environ.get("SOFTHORN_OUTPUT_DIR", "softhorn_out")
    return config


def _write_manifest(config, outdir):
    os.makedirs(outdir, exist_ok=True)
    manifest = {
        "config": config,
        "versions": {
            "softhorn": __version__,
            "numpy": np.__version__,
            "python": sys.version.split()[0],
        },
    }
    with open(os.path.join(outdir, "manifest.json"), "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True, default=str)


def _constraint_specs(config):
    specs = []
    for c in config["constraints"]:
        c = dict(c)
        weight = c.pop("weight", 1.0)
        kind = c.pop("kind")
        specs.append(ConstraintSpec(kind=kind, weight=weight, **c))
    return specs


class _Context:
    """Frozen KB, compiled per-head plans, and evaluation sets."""

    def __init__(self, kb, heads, predict_plan, val_pairs, test_pairs, bundle=None):
        self.kb = kb
        self.heads = heads
        self.predict_plan = predict_plan
        self.val_pairs = val_pairs
        self.test_pairs = test_pairs
        self.bundle = bundle


def _build_context(config):
    seed = int(config["seed"])
    dataset = config["dataset"]
    if dataset.get("content"):
        bundle = data.load_citation_dataset(dataset["content"], dataset["cites"])
        data.make_split(
            bundle,
            per_class_train=int(dataset["per_class_train"]),
            test_n=int(dataset["test_n"]),
            val_fraction=float(dataset["val_fraction"]),
            seed=seed,
        )
        base = config["rules"]
        base_text = open(base, encoding="utf-8").read() if base else model.BASE_PROGRAM
        heads, predict_plan = model.build_model(
            bundle, _constraint_specs(config), base_program=base_text, seed=seed,
            default_depth=int(config["depth"]),
        )
        return _Context(
            bundle.kb, heads, predict_plan,
            bundle.pairs(bundle.val), bundle.pairs(bundle.test), bundle=bundle,
        )

    # generic mode: facts TSVs + examples TSV + rules file
    if not config["rules"]:
        raise ConfigError("generic mode requires a rules file")
    kb = kbmod.KnowledgeBase()
    for facts_path in config["facts"]:
        kb.load_facts_tsv(facts_path)
    for name, members in config["domains"].items():
        kb.define_domain(name, [kb.intern(m) for m in members])
    program = rules.parse_program(open(config["rules"], encoding="utf-8").read())
    examples = data.load_examples_tsv(config["examples"], kb) if config["examples"] else []
    val_pairs = _pairs_from_tsv(config["val_examples"], kb, config["target"])
    test_pairs = _pairs_from_tsv(config["test_examples"], kb, config["target"])
    rules.apply_directives(program, kb, seed=seed)
    kb.freeze()
    vp = rules.validate_program(program, kb)
    by_pred = {}
    for ex in examples:
        by_pred.setdefault(ex.predicate, []).append(ex)
    target = config["target"]
    predict_plan = compiler.compile_plan(vp, target, kb, default_depth=int(config["depth"]))
    heads = [training.LossHead(target, predict_plan, by_pred.pop(target, []), weight=1.0)]
    for pred in sorted(by_pred):
        plan = compiler.compile_plan(vp, pred, kb, default_depth=int(config["depth"]))
        weight = float(config["head_weights"].get(pred, 1.0))
        heads.append(training.LossHead(pred, plan, by_pred[pred], weight=weight))
    return _Context(kb, heads, predict_plan, val_pairs, test_pairs)


def _pairs_from_tsv(path, kb, target):
    if not path:
        return None
    return [(e.query, e.target) for e in data.load_examples_tsv(path, kb)
            if e.predicate == target]


def _train_config(config):
    t = config["train"]
    return training.TrainConfig(
        epochs=int(t["epochs"]), batch_size=int(t["batch_size"]), lr=float(t["lr"]),
        optimizer=t["optimizer"], seed=int(config["seed"]), patience=int(t["patience"]),
    )


def _write_metrics(metrics, outdir):
    path = os.path.join(outdir, "metrics.csv")
    with open(path, "w", encoding="utf-8") as f:
        f.write("metric,value\n")
        for k, v in metrics.items():
            f.write(f"{k},{v}\n")
    width = max(len(k) for k in metrics)
    for k, v in metrics.items():
        print(f"{k:<{width}}  {v}")


# -- subcommands --------------------------------------------------------------


def cmd_ingest(config):
    outdir = config["output_dir"]
    dataset = config["dataset"]
    if dataset.get("content"):
        bundle = data.load_citation_dataset(dataset["content"], dataset["cites"])
        kb = bundle.kb
    else:
        kb = kbmod.KnowledgeBase()
        for facts_path in config["facts"]:
            kb.load_facts_tsv(facts_path)
    kb.freeze()
    os.makedirs(outdir, exist_ok=True)
    out = os.path.join(outdir, "kb_facts.tsv")
    kb.save_facts_tsv(out)
    _write_manifest(config, outdir)
    print(f"wrote {out} ({kb.n_entities} entities, {len(kb.relations)} relations)")
    return 0


def cmd_dump_plan(config):
    ctx = _build_context(config)
    for head in ctx.heads:
        if head.plan.target == config["target"] or len(ctx.heads) == 1:
            print(compiler.dump_plan(head.plan), end="")
            return 0
    print(compiler.dump_plan(ctx.predict_plan), end="")
    return 0


def cmd_train(config):
    outdir = config["output_dir"]
    ctx = _build_context(config)
    cfg = _train_config(config)
    _, history = training.train(ctx.heads, ctx.kb, cfg, val=ctx.val_pairs,
                                eval_head=ctx.heads[0])
    os.makedirs(outdir, exist_ok=True)
    training.save_history_csv(history, os.path.join(outdir, "history.csv"))
    training.save_checkpoint(ctx.kb, os.path.join(outdir, "checkpoint.tsv"))
    metrics = {}
    train_pairs = [(e.query, e.target) for e in ctx.heads[0].examples]
    if train_pairs:
        metrics["train_accuracy"] = training.evaluate_accuracy(
            ctx.predict_plan, ctx.kb, train_pairs)
    if ctx.val_pairs:
        metrics["val_accuracy"] = training.evaluate_accuracy(
            ctx.predict_plan, ctx.kb, ctx.val_pairs)
    if ctx.test_pairs:
        metrics["test_accuracy"] = training.evaluate_accuracy(
            ctx.predict_plan, ctx.kb, ctx.test_pairs)
    _write_metrics(metrics, outdir)
    _write_manifest(config, outdir)
    return 0


def cmd_eval(config, checkpoint):
    ctx = _build_context(config)
    kbmod.apply_checkpoint(ctx.kb, checkpoint)
    metrics = {}
    if config["eval"]["mode"] == "retrieval":
        other = ctx.kb.entities.id(config["eval"]["other_label"])
        gold = [(q, t) for q, t in ctx.test_pairs if t != other]
        docs = [q for q, _ in ctx.test_pairs]
        p, r, f1 = training.evaluate_retrieval_f1(
            ctx.predict_plan, ctx.kb, docs, gold, other)
        metrics = {"precision": p, "recall": r, "f1": f1}
    else:
        if not ctx.test_pairs:
            raise ConfigError("eval requires a test set")
        metrics["test_accuracy"] = training.evaluate_accuracy(
            ctx.predict_plan, ctx.kb, ctx.test_pairs)
    _write_metrics(metrics, config["output_dir"])
    _write_manifest(config, config["output_dir"])
    return 0


def cmd_tune(config):
    outdir = config["output_dir"]
    ctx = _build_context(config)
    if ctx.val_pairs is None:
        raise ConfigError("tune requires a validation set")
    tunable = ctx.heads[1:]
    if not tunable:
        raise ConfigError("no constraint heads to tune")
    t = config["tune"]
    space = bayesopt.TuneSpace.default(
        [f"w_{h.name}" for h in tunable],
        budget=int(t["budget"]), seed=int(config["seed"]),
        low=float(t["low"]), high=float(t["high"]),
    )
    cfg = _train_config(config)
    zeros_like = ctx.kb.get_param_vector().copy()

    def objective(point):
        for head, w in zip(tunable, point):
            head.weight = float(w)
        ctx.kb.set_param_vector(zeros_like)
        training.train(ctx.heads, ctx.kb, cfg, val=ctx.val_pairs, eval_head=ctx.heads[0])
        return -training.evaluate_accuracy(ctx.predict_plan, ctx.kb, ctx.val_pairs)

    best, value, history = bayesopt.tune(objective, space, method=t["method"])
    os.makedirs(outdir, exist_ok=True)
    bayesopt.save_tune_log(space, history, os.path.join(outdir, "tune_log.csv"))
    best_weights = {h.name: float(w) for h, w in zip(tunable, best)}
    with open(os.path.join(outdir, "best_config.yaml"), "w", encoding="utf-8") as f:
        yaml.safe_dump({"weights": best_weights, "val_accuracy": -value}, f)
    _write_manifest(config, outdir)
    print(f"best weights: {best_weights} (val accuracy {-value:.4f})")
    return 0


def cmd_oracle_check(config):
    outdir = config["output_dir"]
    seed = int(config["seed"])
    rep = verify.check_oracle_equivalence(
        trials=int(config["oracle"]["trials"]), seed=seed)
    grads = verify.check_gradients(seed=seed)
    os.makedirs(outdir, exist_ok=True)
    with open(os.path.join(outdir, "oracle_check.csv"), "w", encoding="utf-8") as f:
        f.write("check,value,pass\n")
        f.write(f"oracle_max_deviation,{rep.max_deviation!r},{rep.ok}\n")
        for name, err in grads.items():
            f.write(f"grad_{name},{err!r},{err < 1e-4}\n")
    ok = rep.ok and all(err < 1e-4 for err in grads.values())
    print(f"oracle max deviation: {rep.max_deviation:.3e} "
          f"({'pass' if rep.ok else 'FAIL'})")
    for name, err in grads.items():
        print(f"gradient {name}: {err:.3e} ({'pass' if err < 1e-4 else 'FAIL'})")
    _write_manifest(config, outdir)
    return 0 if ok else 3


def main(argv=None):
    parser = argparse.ArgumentParser(prog="softhorn")
    parser.add_argument("command", choices=[
        "ingest", "dump-plan", "train", "eval", "tune", "oracle-check"])
    parser.add_argument("--config", default=None)
    parser.add_argument("--checkpoint", default=None)
    args, extra = parser.parse_known_args(argv)
    try:
        config = load_config(args.config, extra)
    except (ConfigError, yaml.YAMLError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        if args.command == "ingest":
            return cmd_ingest(config)
        if args.command == "dump-plan":
            return cmd_dump_plan(config)
        if args.command == "train":
            return cmd_train(config)
        if args.command == "eval":
            if not args.checkpoint:
                print("error: eval requires --checkpoint", file=sys.stderr)
                return 1
            return cmd_eval(config, args.checkpoint)
        if args.command == "tune":
            return cmd_tune(config)
        if args.command == "oracle-check":
            return cmd_oracle_check(config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (SofthornError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 1


if __name__ == "__main__":
    sys.exit(main())
