"""Interned symbol tables and the weighted sparse fact store.

Every relation is a sparse entity-by-entity matrix whose cells hold fact
weights.  Non-trainable relations must stay nonnegative; trainable relations
hold unconstrained parameters whose support (the set of stored cells) is
fixed once the knowledge base is frozen.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .errors import (
    FrozenError,
    IngestError,
    UnknownSymbolError,
    WeightDomainError,
)

HIGH = "high"
LOW = "low"


class SymbolTable:
    """Bidirectional name <-> dense-id map with reserved ``high``/``low``."""

    def __init__(self):
        self._ids = {}
        self._names = []
        self.intern(HIGH)
        self.intern(LOW)

    def intern(self, name):
        """Return the id for ``name``, assigning the next free id if new."""
        eid = self._ids.get(name)
        if eid is None:
            eid = len(self._names)
            self._ids[name] = eid
            self._names.append(name)
        return eid

    def id(self, name):
        try:
            return self._ids[name]
        except KeyError:
            raise UnknownSymbolError(f"unknown symbol {name!r}") from None

    def name(self, eid):
        return self._names[eid]

    def __contains__(self, name):
        return name in self._ids

    def __len__(self):
        return len(self._names)


class InitSpec:
    """Initialization for a trainable block: zeros or uniform in [-scale, scale]."""

    def __init__(self, kind="zeros", scale=0.0, seed=0):
        if kind not in ("zeros", "uniform"):
            raise ValueError(f"unknown init kind {kind!r}")
        self.kind = kind
        self.scale = float(scale)
        self.seed = int(seed)

    @classmethod
    def parse(cls, text, seed=0):
        """Parse ``zeros`` or ``uniform:<scale>``."""
        if text == "zeros":
            return cls("zeros")
        if text.startswith("uniform:"):
            return cls("uniform", float(text.split(":", 1)[1]), seed)
        raise ValueError(f"unknown init spec {text!r}")

    def values(self, count):
        if self.kind == "zeros":
            return np.zeros(count)
        rng = np.random.default_rng(self.seed)
        return rng.uniform(-self.scale, self.scale, size=count)


class Relation:
    """One weighted sparse relation matrix.

    Before freeze, facts live in a dict keyed by (head, tail); afterwards they
    are fixed COO arrays plus cached CSR matrices for value and pattern.
    """

    def __init__(self, name, trainable=False):
        self.name = name
        self.trainable = trainable
        self.nonneg_required = not trainable
        self.softmax_output = False
        self._entries = {}
        # set at freeze
        self.rows = None
        self.cols = None
        self.vals = None
        self._n = None
        self._csr = None
        self._csr_stale = True
        self._pattern = None

    @property
    def frozen(self):
        return self.rows is not None

    def set(self, head, tail, weight):
        if self.frozen:
            raise FrozenError(f"relation {self.name!r} is frozen")
        if self.nonneg_required and weight < 0:
            raise WeightDomainError(
                f"negative weight {weight} on non-trainable relation {self.name!r}"
            )
        self._entries[(head, tail)] = float(weight)

    def get(self, head, tail):
        if self.frozen:
            idx = self._index_of(head, tail)
            return float(self.vals[idx])
        return self._entries[(head, tail)]

    def _index_of(self, head, tail):
        key = head * self._n + tail
        keys = self.rows.astype(np.int64) * self._n + self.cols
        idx = np.searchsorted(keys, key)
        if idx >= len(keys) or keys[idx] != key:
            raise KeyError((head, tail))
        return idx

    def nnz(self):
        return len(self.vals) if self.frozen else len(self._entries)

    def freeze(self, n_entities):
        if self.frozen:
            return
        if self.nonneg_required:
            for (h, t), w in self._entries.items():
                if w < 0:
                    raise WeightDomainError(
                        f"negative weight {w} on non-trainable relation {self.name!r}"
                    )
        items = sorted(self._entries.items())
        self.rows = np.array([h for (h, _), _ in items], dtype=np.int64)
        self.cols = np.array([t for (_, t), _ in items], dtype=np.int64)
        self.vals = np.array([w for _, w in items], dtype=np.float64)
        self._n = n_entities
        self._entries = None
        self._csr_stale = True
        ones = np.ones(len(self.rows))
        self._pattern = sp.csr_matrix(
            (ones, (self.rows, self.cols)), shape=(n_entities, n_entities)
        )

    def matrix(self):
        """Current value matrix as CSR (rebuilt after parameter updates)."""
        if not self.frozen:
            raise FrozenError(f"relation {self.name!r} not frozen yet")
        if self._csr_stale or self._csr is None:
            self._csr = sp.csr_matrix(
                (self.vals.copy(), (self.rows, self.cols)), shape=(self._n, self._n)
            )
            self._csr_stale = False
        return self._csr

    def pattern(self):
        """Sparsity pattern as CSR with all stored cells set to 1."""
        if not self.frozen:
            raise FrozenError(f"relation {self.name!r} not frozen yet")
        return self._pattern

    def set_values(self, vals):
        """Replace the parameter vector (trainable relations only)."""
        if not self.trainable:
            raise WeightDomainError(f"relation {self.name!r} is not trainable")
        vals = np.asarray(vals, dtype=np.float64)
        if vals.shape != self.vals.shape:
            raise ValueError("parameter vector shape mismatch")
        self.vals = vals.copy()
        self._csr_stale = True

    def support(self):
        """Stored (head, tail) pairs, sorted."""
        if self.frozen:
            return list(zip(self.rows.tolist(), self.cols.tolist()))
        return sorted(self._entries)


class KnowledgeBase:
    """Entity table plus one weighted sparse matrix per relation."""

    def __init__(self):
        self.entities = SymbolTable()
        self.relations = {}
        self.domains = {}
        self.frozen = False

    # -- build phase ------------------------------------------------------

    def intern(self, name):
        if self.frozen and name not in self.entities:
            raise FrozenError(f"cannot intern new symbol {name!r} on a frozen KB")
        return self.entities.intern(name)

    def relation(self, name, create=False):
        rel = self.relations.get(name)
        if rel is None:
            if not create:
                raise UnknownSymbolError(f"unknown relation {name!r}")
            if self.frozen:
                raise FrozenError(f"cannot create relation {name!r} on a frozen KB")
            rel = Relation(name)
            self.relations[name] = rel
        return rel

    def add_fact(self, rel, head, tail, weight=1.0):
        """Store ``rel(head, tail) = weight``; duplicates overwrite."""
        if self.frozen:
            raise FrozenError("cannot add facts to a frozen KB")
        self.relation(rel, create=True).set(head, tail, weight)

    def add_fact_named(self, rel, head_name, tail_name, weight=1.0):
        self.add_fact(rel, self.intern(head_name), self.intern(tail_name), weight)

    def define_domain(self, name, entity_ids):
        """Register a named entity set used by trainable declarations."""
        ids = list(entity_ids)
        n = len(self.entities)
        for e in ids:
            if not 0 <= e < n:
                raise UnknownSymbolError(f"entity id {e} out of range in domain {name!r}")
        self.domains[name] = ids

    def declare_trainable(self, rel, head_domain, tail_domain, init=None):
        """Mark ``rel`` trainable and materialize a dense parameter block.

        ``head_domain``/``tail_domain`` are iterables of entity ids (or None to
        keep whatever facts exist without adding a block).
        """
        if self.frozen:
            raise FrozenError("cannot declare trainable relations on a frozen KB")
        existing = self.relations.get(rel)
        if existing is None:
            existing = Relation(rel, trainable=True)
            self.relations[rel] = existing
        else:
            existing.trainable = True
            existing.nonneg_required = False
        if head_domain is None or tail_domain is None:
            return
        heads = list(head_domain)
        tails = list(tail_domain)
        n = len(self.entities)
        for e in heads + tails:
            if not 0 <= e < n:
                raise UnknownSymbolError(f"entity id {e} not interned")
        init = init or InitSpec("zeros")
        weights = init.values(len(heads) * len(tails))
        k = 0
        for h in heads:
            for t in tails:
                existing.set(h, t, weights[k])
                k += 1

    def freeze(self):
        """Fix entity count and every relation's support; build matrix caches."""
        if self.frozen:
            return self
        n = len(self.entities)
        for rel in self.relations.values():
            rel.freeze(n)
        self.frozen = True
        return self

    # -- read phase --------------------------------------------------------

    @property
    def n_entities(self):
        return len(self.entities)

    def onehot(self, e):
        n = len(self.entities)
        if not 0 <= e < n:
            raise IndexError(f"entity id {e} out of range [0, {n})")
        v = np.zeros(n)
        v[e] = 1.0
        return v

    def parameter_count(self):
        return sum(r.nnz() for r in self.relations.values() if r.trainable)

    def trainable_relations(self):
        return [self.relations[k] for k in sorted(self.relations) if self.relations[k].trainable]

    def get_param_vector(self):
        rels = self.trainable_relations()
        if not rels:
            return np.zeros(0)
        return np.concatenate([r.vals for r in rels])

    def set_param_vector(self, vec):
        vec = np.asarray(vec, dtype=np.float64)
        off = 0
        for r in self.trainable_relations():
            k = r.nnz()
            r.set_values(vec[off : off + k])
            off += k
        if off != len(vec):
            raise ValueError("parameter vector length mismatch")

    # -- facts TSV ----------------------------------------------------------

    def save_facts_tsv(self, path, relation_names=None):
        """Write facts as ``relation<TAB>head<TAB>tail<TAB>weight`` lines."""
        names = sorted(relation_names or self.relations)
        with open(path, "w", encoding="utf-8") as f:
            for name in names:
                rel = self.relations[name]
                for (h, t), w in zip(rel.support(), _values_of(rel)):
                    f.write(
                        f"{name}\t{self.entities.name(h)}\t{self.entities.name(t)}\t{w!r}\n"
                    )

    def load_facts_tsv(self, path):
        """Read a facts TSV (``#`` lines are comments; weight defaults to 1)."""
        with open(path, encoding="utf-8") as f:
            for lineno, raw in enumerate(f, start=1):
                line = raw.rstrip("\n")
                if not line.strip() or line.lstrip().startswith("#"):
                    continue
                parts = line.split("\t")
                if len(parts) not in (3, 4):
                    raise IngestError(f"expected 3 or 4 tab-separated fields", line=lineno)
                rel, head, tail = parts[0], parts[1], parts[2]
                try:
                    weight = float(parts[3]) if len(parts) == 4 else 1.0
                except ValueError:
                    raise IngestError(f"bad weight {parts[3]!r}", line=lineno) from None
                self.add_fact_named(rel, head, tail, weight)
        return self


def _values_of(rel):
    if rel.frozen:
        return rel.vals.tolist()
    return [rel._entries[k] for k in sorted(rel._entries)]


def apply_checkpoint(kb, path):
    """Load trainable weights from a facts TSV into a frozen KB.

    Only cells already in the support may be set; support never changes.
    """
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise IngestError("expected 4 tab-separated fields", line=lineno)
            rel = kb.relations.get(parts[0])
            if rel is None:
                raise UnknownSymbolError(f"unknown relation {parts[0]!r}")
            h = kb.entities.id(parts[1])
            t = kb.entities.id(parts[2])
            idx = rel._index_of(h, t)
            rel.vals[idx] = float(parts[3])
            rel._csr_stale = True
    return kb
