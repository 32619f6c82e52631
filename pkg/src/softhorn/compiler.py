"""Compilation of validated rule programs into differentiable plans.

A plan is a topologically ordered list of nodes over a small vocabulary:
seed input, sparse vector-matrix product, disjunctive sum, L1 normalization,
masked softmax, and the Tsallis entropy pair.  Recursive predicates are
unrolled to a fixed depth.  ``enumerate_proofs`` provides the independent
brute-force oracle: it walks every proof top-down and sums proof weights
(products of fact weights) per answer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    ConfigError,
    EmptySupportError,
    NoBaseCaseError,
    OracleBudgetError,
)
from .rules import ENTROPY_BUILTIN

DEFAULT_DEPTH = 3

SEED = "seed"
MATVEC = "matvec"
SUM = "sum"
L1NORM = "l1norm"
SOFTMAX = "softmax"
ENTROPY = "entropy"

_EPS = 1e-12


@dataclass(frozen=True)
class Node:
    idx: int
    kind: str
    ref: str  # relation name (matvec) or predicate name (softmax), else ""
    inputs: tuple


@dataclass
class Plan:
    target: str
    nodes: list
    output: int
    depths: dict  # predicate -> unroll depth actually used

    @property
    def seed(self):
        return 0

    def relations_used(self):
        return sorted({n.ref for n in self.nodes if n.kind == MATVEC})


@dataclass(frozen=True)
class ProofTrace:
    answer: int
    weight: float
    facts: tuple  # (relation, head, tail) triples


class _Builder:
    def __init__(self, vp, kb, default_depth):
        self.vp = vp
        self.kb = kb
        self.default_depth = default_depth
        self.nodes = []
        self.depths = {}

    def add(self, kind, ref, inputs):
        node = Node(len(self.nodes), kind, ref, tuple(inputs))
        self.nodes.append(node)
        return node.idx

    def expand_pred(self, pred, in_idx, budget):
        vp = self.vp
        rules = vp.rules_by_pred[pred]
        recursive = pred in vp.recursive
        if recursive:
            remaining = budget.get(pred)
            if remaining is None:
                remaining = vp.depth_of(pred, self.default_depth)
                if remaining <= 0:
                    raise ConfigError(f"unroll depth for {pred!r} must be >= 1")
                self.depths[pred] = remaining
            if remaining <= 0:
                return None
            scc = vp.scc_of[pred]
            base_rules = [
                r for r in rules if not any(a.predicate in scc for a in r.body)
            ]
            if not base_rules:
                raise NoBaseCaseError(
                    f"recursive predicate {pred!r} has no non-recursive base rule"
                )
            use = rules if remaining > 1 else base_rules
            budget = dict(budget)
            budget[pred] = remaining - 1
        else:
            use = rules
            self.depths.setdefault(pred, 1)

        branches = []
        for rule in use:
            out = self.expand_body(rule, in_idx, budget)
            if out is not None:
                branches.append(out)
        if not branches:
            return None
        out = branches[0] if len(branches) == 1 else self.add(SUM, "", branches)
        if pred in self.vp.directives.softmax:
            out = self.add(SOFTMAX, pred, (out,))
        return out

    def expand_body(self, rule, in_idx, budget):
        cur = in_idx
        for atom in rule.body:
            pred = atom.predicate
            if pred == ENTROPY_BUILTIN and pred in self.vp.directives.builtins:
                cur = self.add(L1NORM, "", (cur,))
                cur = self.add(ENTROPY, "", (cur,))
            elif pred in self.vp.rules_by_pred:
                cur = self.expand_pred(pred, cur, budget)
                if cur is None:
                    return None
            else:
                cur = self.add(MATVEC, pred, (cur,))
        return cur


def compile_plan(vp, target, kb, default_depth=DEFAULT_DEPTH):
    """Compile ``target`` from a validated program into a :class:`Plan`."""
    if target not in vp.rules_by_pred:
        raise ConfigError(f"target predicate {target!r} is not defined by any rule")
    if default_depth <= 0:
        raise ConfigError("default unroll depth must be >= 1")
    b = _Builder(vp, kb, default_depth)
    seed = b.add(SEED, "", ())
    out = b.expand_pred(target, seed, {})
    if out is None:
        raise NoBaseCaseError(f"target predicate {target!r} unrolls to nothing")
    return Plan(target=target, nodes=b.nodes, output=out, depths=b.depths)


# -- forward evaluation ------------------------------------------------------


def forward(plan, kb, queries):
    """Run the plan on a batch of query entities.

    Returns ``(values, supports)``: per-node dense (batch x entities) float
    arrays and boolean structural-support arrays.  Support is computed on the
    sparsity pattern with all weights replaced by one; masked softmax rows
    with empty support yield all-zero output rows.
    """
    n = kb.n_entities
    queries = np.asarray(queries, dtype=np.int64)
    if queries.size and (queries.min() < 0 or queries.max() >= n):
        raise IndexError("query entity id out of range")
    b = len(queries)
    values = [None] * len(plan.nodes)
    supports = [None] * len(plan.nodes)
    high = 0
    low = 1
    for node in plan.nodes:
        if node.kind == SEED:
            v = np.zeros((b, n))
            v[np.arange(b), queries] = 1.0
            s = v > 0
        elif node.kind == MATVEC:
            rel = kb.relations[node.ref]
            v = values[node.inputs[0]] @ rel.matrix()
            s = (supports[node.inputs[0]].astype(np.float64) @ rel.pattern()) > 0
        elif node.kind == SUM:
            v = sum(values[i] for i in node.inputs)
            s = np.zeros((b, n), dtype=bool)
            for i in node.inputs:
                s |= supports[i]
        elif node.kind == L1NORM:
            x = values[node.inputs[0]]
            v = x / (x.sum(axis=1, keepdims=True) + _EPS)
            s = supports[node.inputs[0]]
        elif node.kind == SOFTMAX:
            x = values[node.inputs[0]]
            s = supports[node.inputs[0]]
            v = _softmax_rows(x, s)
        elif node.kind == ENTROPY:
            p = values[node.inputs[0]]
            sin = supports[node.inputs[0]]
            live = sin.any(axis=1)
            ent = 1.0 - (p * p).sum(axis=1)
            v = np.zeros((b, n))
            v[live, high] = ent[live]
            v[live, low] = 1.0 - ent[live]
            s = np.zeros((b, n), dtype=bool)
            s[live, high] = True
            s[live, low] = True
        else:  # pragma: no cover
            raise ValueError(f"unknown node kind {node.kind!r}")
        values[node.idx] = v
        supports[node.idx] = s
    return values, supports


def _softmax_rows(scores, mask):
    out = np.zeros_like(scores)
    for i in range(scores.shape[0]):
        m = mask[i]
        if not m.any():
            continue
        x = scores[i, m]
        e = np.exp(x - x.max())
        out[i, m] = e / e.sum()
    return out


def evaluate(plan, kb, queries):
    """Score matrix (len(queries) x n_entities) for the plan output node."""
    values, _ = forward(plan, kb, queries)
    return values[plan.output]


def support_mask(plan, kb, query):
    """Boolean reachability vector at the plan output for one query."""
    _, supports = forward(plan, kb, [query])
    return supports[plan.output][0]


# -- brute-force proof enumeration (oracle) ----------------------------------


def enumerate_proofs(vp, kb, target, query, depth=DEFAULT_DEPTH, budget=10**6):
    """Exhaustively enumerate proofs of ``target(query, Y)`` up to the same
    unroll depth as :func:`compile_plan`.

    Each proof's weight is the product of the weights of the facts it uses;
    rules contribute a factor of one.  Builtin and softmax nodes are not
    supported here: this is the oracle for raw score plans.
    """
    if depth <= 0:
        raise ConfigError("depth must be >= 1")
    counter = [0]

    def prove_pred(pred, entity, budgets):
        rules = vp.rules_by_pred[pred]
        if pred in vp.recursive:
            remaining = budgets.get(pred, vp.depth_of(pred, depth))
            if remaining <= 0:
                return []
            scc = vp.scc_of[pred]
            use = (
                rules
                if remaining > 1
                else [r for r in rules if not any(a.predicate in scc for a in r.body)]
            )
            budgets = dict(budgets)
            budgets[pred] = remaining - 1
        else:
            use = rules
        out = []
        for rule in use:
            out.extend(prove_body(rule.body, entity, budgets))
        return out

    def prove_body(body, entity, budgets):
        frontier = [(entity, 1.0, ())]
        for atom in body:
            new = []
            for ent, w, facts in frontier:
                if atom.predicate in vp.rules_by_pred:
                    subs = prove_pred(atom.predicate, ent, budgets)
                else:
                    rel = kb.relations[atom.predicate]
                    subs = [
                        ProofTrace(int(t), float(v), ((atom.predicate, int(h), int(t)),))
                        for h, t, v in zip(rel.rows, rel.cols, rel.vals)
                        if h == ent
                    ]
                for sub in subs:
                    counter[0] += 1
                    if counter[0] > budget:
                        raise OracleBudgetError(
                            f"proof enumeration exceeded {budget} expansions"
                        )
                    new.append((sub.answer, w * sub.weight, facts + sub.facts))
            frontier = new
        return [ProofTrace(e, w, f) for e, w, f in frontier]

    return prove_pred(target, query, {})


def proof_scores(proofs, n_entities):
    """Per-answer sums of proof weights as a dense vector."""
    v = np.zeros(n_entities)
    for p in proofs:
        v[p.answer] += p.weight
    return v


# -- plan serialization -------------------------------------------------------


def dump_plan(plan):
    """Line-oriented text form: ``<id> <kind> <ref> <input ids...>``."""
    lines = [f"target {plan.target}", f"output {plan.output}"]
    for node in plan.nodes:
        ref = node.ref or "-"
        parts = [str(node.idx), node.kind, ref] + [str(i) for i in node.inputs]
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


def parse_plan(text):
    """Rebuild a plan from :func:`dump_plan` output (test harness helper)."""
    target = None
    output = None
    nodes = []
    for line in text.splitlines():
        if not line.strip():
            continue
        parts = line.split()
        if parts[0] == "target":
            target = parts[1]
        elif parts[0] == "output":
            output = int(parts[1])
        else:
            idx, kind, ref = int(parts[0]), parts[1], parts[2]
            inputs = tuple(int(p) for p in parts[3:])
            nodes.append(Node(idx, kind, "" if ref == "-" else ref, inputs))
    if target is None or output is None:
        raise ValueError("missing target/output header")
    return Plan(target=target, nodes=nodes, output=output, depths={})
