"""Reverse-mode differentiation over the plan node vocabulary.

The forward pass (recorded by :func:`softhorn.compiler.forward`) doubles as
the tape; the backward pass walks nodes in reverse topological order and
accumulates gradients only for trainable relation cells.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import compiler
from .errors import EmptySupportError, NormalizationError, OffSupportWarning

EPS = 1e-12


@dataclass(frozen=True)
class EntropyPair:
    high: float
    low: float


def tsallis_entropy_pair(p):
    """Quadratic (q=2) Tsallis entropy split over ``high``/``low``.

    ``high = 1 - sum(p_i^2)``; ``low = 1 - high``.  Input must be a
    distribution (nonnegative, summing to one within 1e-9).
    """
    p = np.asarray(p, dtype=np.float64)
    if np.any(p < 0):
        raise NormalizationError("distribution has negative entries")
    if abs(p.sum() - 1.0) > 1e-9:
        raise NormalizationError(f"distribution sums to {p.sum()!r}, expected 1")
    high = 1.0 - float(np.dot(p, p))
    return EntropyPair(high=high, low=1.0 - high)


def softmax_masked(scores, mask):
    """Numerically stable softmax over masked entries; exact zeros elsewhere."""
    scores = np.asarray(scores, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise EmptySupportError("softmax over empty support")
    out = np.zeros_like(scores)
    x = scores[mask]
    e = np.exp(x - x.max())
    out[mask] = e / e.sum()
    return out


def cross_entropy_loss(p, target):
    """``-log(p[target] + eps)``; off-support targets warn and hit the floor."""
    p = np.asarray(p, dtype=np.float64)
    pt = p[target]
    if pt <= 0.0:
        warnings.warn(
            f"cross-entropy target {target} has zero probability (off support)",
            OffSupportWarning,
            stacklevel=2,
        )
    return float(-np.log(pt + EPS))


def backward(plan, kb, values, supports, grad_output):
    """Propagate ``grad_output`` (batch x entities, at the output node) back
    to every trainable relation cell.

    Returns a dict relation-name -> gradient vector aligned with the
    relation's stored value array.
    """
    grads = [None] * len(plan.nodes)
    grads[plan.output] = grad_output
    param_grads = {
        r.name: np.zeros_like(r.vals) for r in kb.trainable_relations()
    }

    def accumulate(idx, g):
        if grads[idx] is None:
            grads[idx] = g.copy()
        else:
            grads[idx] += g

    for node in reversed(plan.nodes):
        g = grads[node.idx]
        if g is None or node.kind == compiler.SEED:
            continue
        if node.kind == compiler.MATVEC:
            rel = kb.relations[node.ref]
            vin = values[node.inputs[0]]
            accumulate(node.inputs[0], g @ rel.matrix().T)
            if rel.trainable:
                param_grads[rel.name] += (vin[:, rel.rows] * g[:, rel.cols]).sum(axis=0)
        elif node.kind == compiler.SUM:
            for i in node.inputs:
                accumulate(i, g)
        elif node.kind == compiler.L1NORM:
            x = values[node.inputs[0]]
            out = values[node.idx]
            s = x.sum(axis=1, keepdims=True) + EPS
            accumulate(node.inputs[0], (g - (g * out).sum(axis=1, keepdims=True)) / s)
        elif node.kind == compiler.SOFTMAX:
            p = values[node.idx]
            accumulate(node.inputs[0], p * (g - (g * p).sum(axis=1, keepdims=True)))
        elif node.kind == compiler.ENTROPY:
            p = values[node.inputs[0]]
            scale = (g[:, 0] - g[:, 1])[:, None]
            accumulate(node.inputs[0], -2.0 * p * scale)
        else:  # pragma: no cover
            raise ValueError(f"unknown node kind {node.kind!r}")
    return param_grads


def batch_loss(plan, kb, queries, targets):
    """Mean cross-entropy of the plan output at the targets.

    Examples whose structural support is empty are skipped (counted, not
    scored); in-support examples whose target cell is unreachable warn and
    contribute the log-epsilon floor.

    Returns ``(loss, values, supports, included, grad_output)`` where
    ``grad_output`` is the loss gradient at the output node (ready for
    :func:`backward`) and ``included`` is the boolean inclusion mask.
    """
    queries = np.asarray(queries, dtype=np.int64)
    targets = np.asarray(targets, dtype=np.int64)
    values, supports = compiler.forward(plan, kb, queries)
    out = values[plan.output]
    sup = supports[plan.output]
    included = sup.any(axis=1)
    n_inc = int(included.sum())
    grad_output = np.zeros_like(out)
    if n_inc == 0:
        return 0.0, values, supports, included, grad_output
    idx = np.flatnonzero(included)
    pt = out[idx, targets[idx]]
    off = ~sup[idx, targets[idx]]
    if off.any():
        warnings.warn(
            f"{int(off.sum())} cross-entropy target(s) off support",
            OffSupportWarning,
            stacklevel=2,
        )
    loss = float(-np.log(pt + EPS).mean())
    grad_output[idx, targets[idx]] = -1.0 / (pt + EPS) / n_inc
    return loss, values, supports, included, grad_output


def forward_backward(plan, kb, queries, targets):
    """Mean loss and trainable-cell gradients for one example batch.

    Returns ``(loss, param_grads, n_skipped)``.
    """
    loss, values, supports, included, grad_output = batch_loss(plan, kb, queries, targets)
    param_grads = backward(plan, kb, values, supports, grad_output)
    return loss, param_grads, int((~included).sum())


def grad_check(plan, kb, queries, targets, h=1e-5):
    """Max relative error of analytic vs central-finite-difference gradients
    over every trainable cell."""
    loss, analytic, _ = forward_backward(plan, kb, queries, targets)
    worst = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", OffSupportWarning)
        for rel in kb.trainable_relations():
            for i in range(rel.nnz()):
                orig = rel.vals[i]
                rel.vals[i] = orig + h
                rel._csr_stale = True
                lp, *_ = batch_loss(plan, kb, queries, targets)
                rel.vals[i] = orig - h
                rel._csr_stale = True
                lm, *_ = batch_loss(plan, kb, queries, targets)
                rel.vals[i] = orig
                rel._csr_stale = True
                numeric = (lp - lm) / (2.0 * h)
                a = analytic[rel.name][i]
                err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-6)
                worst = max(worst, err)
    return worst
