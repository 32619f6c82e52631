"""Parser, AST, and validator for the chain-Horn rule language.

Grammar sketch::

    program   := (directive | rule | comment)*
    rule      := atom (":-" | "<-") atom ("," atom)* "."
    atom      := IDENT "(" VAR "," VAR ")"
    directive := "#trainable" REL DOMAIN DOMAIN "init=" ("zeros" | "uniform:" FLOAT)
               | "#builtin" IDENT
               | "#softmax" IDENT
               | "#maxdepth" IDENT INT

Identifiers are ``[a-zA-Z_][a-zA-Z0-9_]*``; variables start with an uppercase
letter.  ``%`` starts a comment; ``#`` is reserved for directives.  A rule may
span lines; ``.`` terminates it.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import (
    ArityError,
    BuiltinPositionError,
    ChainError,
    ParseError,
    UnknownPredicateError,
    ValidationError,
)

ENTROPY_BUILTIN = "entropy"

_IDENT = re.compile(r"[a-zA-Z_][a-zA-Z0-9_]*")
_TOKEN = re.compile(r"\s*(?:([a-zA-Z_][a-zA-Z0-9_]*)|([(),.])|(:-|<-)|(%[^\n]*)|(\S))")


@dataclass(frozen=True)
class Atom:
    predicate: str
    arg1: str
    arg2: str

    def __str__(self):
        return f"{self.predicate}({self.arg1},{self.arg2})"


@dataclass(frozen=True)
class Rule:
    head: Atom
    body: tuple

    def __str__(self):
        return f"{self.head} :- {', '.join(str(a) for a in self.body)}."


@dataclass
class Directives:
    trainable: dict = field(default_factory=dict)  # rel -> (head_domain, tail_domain, init text)
    builtins: set = field(default_factory=set)
    softmax: set = field(default_factory=set)
    maxdepth: dict = field(default_factory=dict)  # pred -> int


@dataclass
class Program:
    rules: list
    directives: Directives = field(default_factory=Directives)

    def predicates(self):
        return {r.head.predicate for r in self.rules}


class _Token:
    __slots__ = ("kind", "text", "line", "col")

    def __init__(self, kind, text, line, col):
        self.kind = kind
        self.text = text
        self.line = line
        self.col = col


def _tokenize(line, lineno):
    pos = 0
    out = []
    while pos < len(line):
        m = _TOKEN.match(line, pos)
        if not m:
            break
        ident, punct, arrow, comment, bad = m.groups()
        col = m.start(m.lastindex) + 1
        if ident is not None:
            out.append(_Token("ident", ident, lineno, col))
        elif punct is not None:
            out.append(_Token(punct, punct, lineno, col))
        elif arrow is not None:
            out.append(_Token(":-", arrow, lineno, col))
        elif comment is not None:
            break
        elif bad is not None and bad.strip():
            raise ParseError(f"unexpected character {bad!r}", line=lineno, column=col)
        pos = m.end()
    return out


def _parse_directive(line, lineno):
    parts = line.split("%", 1)[0].split()
    name = parts[0]
    if name == "#trainable":
        if len(parts) != 5 or not parts[4].startswith("init="):
            raise ParseError(
                "expected '#trainable rel head_domain tail_domain init=<zeros|uniform:s>'",
                line=lineno,
            )
        init = parts[4][len("init="):]
        if init != "zeros" and not re.fullmatch(r"uniform:[0-9.eE+-]+", init):
            raise ParseError(f"bad init spec {init!r}", line=lineno)
        return ("trainable", parts[1], (parts[2], parts[3], init))
    if name == "#builtin":
        if len(parts) != 2:
            raise ParseError("expected '#builtin <name>'", line=lineno)
        return ("builtin", parts[1], None)
    if name == "#softmax":
        if len(parts) != 2:
            raise ParseError("expected '#softmax <predicate>'", line=lineno)
        return ("softmax", parts[1], None)
    if name == "#maxdepth":
        if len(parts) != 3:
            raise ParseError("expected '#maxdepth <predicate> <depth>'", line=lineno)
        try:
            depth = int(parts[2])
        except ValueError:
            raise ParseError(f"bad depth {parts[2]!r}", line=lineno) from None
        return ("maxdepth", parts[1], depth)
    raise ParseError(f"unknown directive {name!r}", line=lineno)


class _RuleParser:
    """Recursive-descent parser over a token stream for a single rule."""

    def __init__(self, tokens):
        self.tokens = tokens
        self.pos = 0

    def _peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def _next(self, kind=None):
        tok = self._peek()
        if tok is None:
            last = self.tokens[-1]
            raise ParseError("unexpected end of rule", line=last.line, column=last.col)
        if kind is not None and tok.kind != kind:
            raise ParseError(
                f"expected {kind!r}, found {tok.text!r}", line=tok.line, column=tok.col
            )
        self.pos += 1
        return tok

    def atom(self):
        pred = self._next("ident")
        self._next("(")
        args = [self._next("ident")]
        while self._peek() is not None and self._peek().kind == ",":
            self._next(",")
            args.append(self._next("ident"))
        self._next(")")
        if len(args) != 2:
            raise ArityError(
                f"predicate {pred.text!r} has {len(args)} arguments, expected 2",
                line=pred.line,
                column=pred.col,
            )
        for a in args:
            if not a.text[0].isupper():
                raise ParseError(
                    f"atom argument {a.text!r} must be a variable (uppercase initial)",
                    line=a.line,
                    column=a.col,
                )
        return Atom(pred.text, args[0].text, args[1].text)

    def rule(self):
        head = self.atom()
        self._next(":-")
        body = [self.atom()]
        while True:
            tok = self._next()
            if tok.kind == ".":
                break
            if tok.kind != ",":
                raise ParseError(
                    f"expected ',' or '.', found {tok.text!r}", line=tok.line, column=tok.col
                )
            body.append(self.atom())
        tok = self._peek()
        if tok is not None:
            raise ParseError(
                f"unexpected token {tok.text!r} after rule", line=tok.line, column=tok.col
            )
        return Rule(head, tuple(body))


def parse_program(text):
    """Parse rule-language source into a :class:`Program` (rule order kept)."""
    program = Program(rules=[])
    pending = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if stripped.startswith("#"):
            if pending:
                tok = pending[0]
                raise ParseError("directive inside an unterminated rule", line=lineno)
            kind, key, val = _parse_directive(stripped, lineno)
            d = program.directives
            if kind == "trainable":
                d.trainable[key] = val
            elif kind == "builtin":
                d.builtins.add(key)
            elif kind == "softmax":
                d.softmax.add(key)
            elif kind == "maxdepth":
                if key in d.maxdepth:
                    raise ParseError(f"duplicate #maxdepth for {key!r}", line=lineno)
                d.maxdepth[key] = val
            continue
        pending.extend(_tokenize(line, lineno))
        while any(t.kind == "." for t in pending):
            cut = next(i for i, t in enumerate(pending) if t.kind == ".") + 1
            chunk, pending = pending[:cut], pending[cut:]
            program.rules.append(_RuleParser(chunk).rule())
    if pending:
        tok = pending[0]
        raise ParseError("rule not terminated by '.'", line=tok.line, column=tok.col)
    return program


def format_program(program):
    """Canonical text form; ``parse_program(format_program(p))`` equals ``p``."""
    lines = []
    d = program.directives
    for rel in sorted(d.trainable):
        hd, td, init = d.trainable[rel]
        lines.append(f"#trainable {rel} {hd} {td} init={init}")
    for b in sorted(d.builtins):
        lines.append(f"#builtin {b}")
    for s in sorted(d.softmax):
        lines.append(f"#softmax {s}")
    for p in sorted(d.maxdepth):
        lines.append(f"#maxdepth {p} {d.maxdepth[p]}")
    for rule in program.rules:
        lines.append(str(rule))
    return "\n".join(lines) + "\n"


def apply_directives(program, kb, seed=0):
    """Apply ``#trainable`` declarations to the KB (domains must be defined).

    ``#softmax`` flags are mirrored onto same-named relations when present.
    """
    from .errors import UnknownSymbolError
    from .kb import InitSpec

    for rel, (head_domain, tail_domain, init) in sorted(program.directives.trainable.items()):
        for dom in (head_domain, tail_domain):
            if dom not in kb.domains:
                raise UnknownSymbolError(f"domain {dom!r} not defined on the KB")
        kb.declare_trainable(
            rel,
            kb.domains[head_domain],
            kb.domains[tail_domain],
            InitSpec.parse(init, seed=seed),
        )
    for pred in program.directives.softmax:
        if pred in kb.relations:
            kb.relations[pred].softmax_output = True
    return kb


@dataclass
class ValidatedProgram:
    program: Program
    rules_by_pred: dict  # predicate -> list[Rule]
    recursive: set  # predicates taking part in a rule-level cycle
    scc_of: dict  # predicate -> frozenset of its strongly connected component
    fact_predicates: set

    @property
    def directives(self):
        return self.program.directives

    def depth_of(self, pred, default=3):
        return self.program.directives.maxdepth.get(pred, default)


def _sccs(graph):
    """Tarjan over a dict-of-sets adjacency; returns list of sets."""
    index = {}
    low = {}
    stack = []
    on_stack = set()
    out = []
    counter = [0]

    def strongconnect(v):
        index[v] = low[v] = counter[0]
        counter[0] += 1
        stack.append(v)
        on_stack.add(v)
        for w in graph.get(v, ()):
            if w not in index:
                strongconnect(w)
                low[v] = min(low[v], low[w])
            elif w in on_stack:
                low[v] = min(low[v], index[w])
        if low[v] == index[v]:
            comp = set()
            while True:
                w = stack.pop()
                on_stack.discard(w)
                comp.add(w)
                if w == v:
                    break
            out.append(comp)

    for v in list(graph):
        if v not in index:
            strongconnect(v)
    return out


def validate_program(program, kb):
    """Check chain structure, builtin placement, and predicate resolution."""
    builtins = set(program.directives.builtins)
    for b in builtins:
        if b != ENTROPY_BUILTIN:
            raise UnknownPredicateError(f"unsupported builtin {b!r}")
    rules_by_pred = {}
    for rule in program.rules:
        rules_by_pred.setdefault(rule.head.predicate, []).append(rule)

    fact_predicates = set(kb.relations) if kb is not None else set()
    for pred in rules_by_pred:
        if pred in fact_predicates:
            raise ValidationError(
                f"predicate {pred!r} is defined both by rules and by facts"
            )
        if pred in builtins:
            raise ValidationError(f"builtin {pred!r} cannot be redefined by rules")

    for rule in program.rules:
        _check_chain(rule)
        for i, atom in enumerate(rule.body):
            if atom.predicate in builtins:
                if i != len(rule.body) - 1:
                    raise BuiltinPositionError(
                        f"builtin {atom.predicate!r} must be the final body atom in {rule}"
                    )
                continue
            if atom.predicate not in rules_by_pred and atom.predicate not in fact_predicates:
                raise UnknownPredicateError(
                    f"predicate {atom.predicate!r} in {rule} resolves to neither "
                    "facts, rules, nor a builtin"
                )
        if rule.head.predicate in builtins:
            raise BuiltinPositionError(f"builtin in rule head: {rule}")

    graph = {
        pred: {
            a.predicate
            for r in rules
            for a in r.body
            if a.predicate in rules_by_pred
        }
        for pred, rules in rules_by_pred.items()
    }
    recursive = set()
    scc_of = {}
    for comp in _sccs(graph):
        frozen = frozenset(comp)
        for p in comp:
            scc_of[p] = frozen
        if len(comp) > 1:
            recursive.update(comp)
        else:
            (p,) = comp
            if p in graph.get(p, ()):
                recursive.add(p)

    return ValidatedProgram(
        program=program,
        rules_by_pred=rules_by_pred,
        recursive=recursive,
        scc_of=scc_of,
        fact_predicates=fact_predicates,
    )


def _check_chain(rule):
    chain = [rule.head.arg1]
    for atom in rule.body:
        if atom.arg1 != chain[-1]:
            raise ChainError(
                f"variable {atom.arg1!r} breaks the chain in {rule}", variable=atom.arg1
            )
        chain.append(atom.arg2)
    if chain[-1] != rule.head.arg2:
        raise ChainError(
            f"variable {rule.body[-1].arg2!r} does not reach the head output in {rule}",
            variable=rule.body[-1].arg2,
        )
    seen = set()
    for v in chain:
        if v in seen:
            raise ChainError(f"variable {v!r} reused along the chain in {rule}", variable=v)
        seen.add(v)
