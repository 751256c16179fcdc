"""Temporal formulas over risk-state traces.

Finite-trace semantics over positions ``0..n-1``: ``Always``, ``Eventually``
and ``Until`` look at the remaining suffix, ``Once`` at the prefix. At the end
of the trace an open ``Until`` obligation fails and an open ``WeakUntil``
obligation holds.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union

from ramkit.model import CausalFactorModel, Constraint, ConstraintKind, Phase, effective_constraints
from ramkit.riskspace import RiskState, RiskStructure


@dataclass(frozen=True)
class Const:
    value: bool


@dataclass(frozen=True)
class AtomPhase:
    factor: str
    phase: Phase


@dataclass(frozen=True)
class Not:
    body: "Formula"


@dataclass(frozen=True)
class And:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Or:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Implies:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class Always:
    body: "Formula"


@dataclass(frozen=True)
class Eventually:
    body: "Formula"


@dataclass(frozen=True)
class Once:
    body: "Formula"


@dataclass(frozen=True)
class Until:
    left: "Formula"
    right: "Formula"


@dataclass(frozen=True)
class WeakUntil:
    left: "Formula"
    right: "Formula"


Formula = Union[Const, AtomPhase, Not, And, Or, Implies, Always, Eventually, Once, Until, WeakUntil]

TRUE = Const(True)
FALSE = Const(False)


def active(factor: str) -> AtomPhase:
    return AtomPhase(factor, Phase.ACTIVE)


def inactive(factor: str) -> AtomPhase:
    return AtomPhase(factor, Phase.INACTIVE)


def conjunction(formulas: Iterable[Formula]) -> Formula:
    """Left-nested conjunction; ``true`` for no operands."""
    result: Optional[Formula] = None
    for f in formulas:
        result = f if result is None else And(result, f)
    return TRUE if result is None else result


def atoms(f: Formula) -> set[AtomPhase]:
    if isinstance(f, AtomPhase):
        return {f}
    if isinstance(f, Const):
        return set()
    if isinstance(f, (Not, Always, Eventually, Once)):
        return atoms(f.body)
    return atoms(f.left) | atoms(f.right)


# Translations of constraints ------------------------------------------------


def constraint_to_formula(c: Constraint) -> Formula:
    a, b = active(c.left), active(c.right)
    if c.kind is ConstraintKind.REQUIRES:
        return Always(Implies(a, Once(b)))
    if c.kind is ConstraintKind.CAUSES:
        return Always(Implies(a, Eventually(Until(b, Not(a)))))
    if c.kind is ConstraintKind.DENIES:
        return Always(Implies(a, Eventually(Until(Not(b), Not(a)))))
    return Always(Implies(a, Eventually(Until(inactive(c.right), Not(a)))))


def requires_weak_until(c: Constraint) -> Formula:
    """The weak-until shape of a requires constraint: G(!left W right).

    Stronger than the translation used by :func:`constraint_to_formula` on
    traces where ``right`` stops being active while ``left`` stays active.
    """
    if c.kind is not ConstraintKind.REQUIRES:
        raise ValueError("only requires constraints have a weak-until shape")
    return Always(WeakUntil(Not(active(c.left)), active(c.right)))


def globally_precedes(first: str, then: str) -> Formula:
    """``first`` becomes active strictly before ``then`` does, if ``then`` ever does."""
    a, b = active(then), active(first)
    return Implies(Eventually(a), Until(Not(a), And(b, Not(a))))


def model_to_formula(model: CausalFactorModel, situation: Optional[str] = None) -> Formula:
    """Conjunction of the translated constraints of a situation, or the global ones."""
    if situation is None:
        constraints: Iterable[Constraint] = model.global_constraints
    else:
        constraints = effective_constraints(model, situation)
    return conjunction(constraint_to_formula(c) for c in sorted(constraints, key=Constraint.sort_key))


# Evaluation ------------------------------------------------------------------


@dataclass(frozen=True)
class TraceVerdict:
    holds: bool
    witness_index: Optional[int] = None

    def __post_init__(self) -> None:
        if self.holds != (self.witness_index is None):
            raise ValueError("a witness index is given exactly for violations")


def _values(f: Formula, trace: Sequence[RiskState], memo: dict) -> list[bool]:
    """Truth value of ``f`` at every position of ``trace``."""
    key = id(f)
    if key in memo:
        return memo[key][1]
    n = len(trace)
    if isinstance(f, Const):
        out = [f.value] * n
    elif isinstance(f, AtomPhase):
        out = []
        for state in trace:
            if f.factor not in state.factors:
                raise KeyError(f"factor {f.factor!r} is not part of the trace states")
            out.append(state[f.factor] is f.phase)
    elif isinstance(f, Not):
        out = [not v for v in _values(f.body, trace, memo)]
    elif isinstance(f, And):
        out = [x and y for x, y in zip(_values(f.left, trace, memo), _values(f.right, trace, memo))]
    elif isinstance(f, Or):
        out = [x or y for x, y in zip(_values(f.left, trace, memo), _values(f.right, trace, memo))]
    elif isinstance(f, Implies):
        out = [not x or y for x, y in zip(_values(f.left, trace, memo), _values(f.right, trace, memo))]
    elif isinstance(f, Once):
        body = _values(f.body, trace, memo)
        out, seen = [], False
        for v in body:
            seen = seen or v
            out.append(seen)
    else:
        out = [False] * n
        if isinstance(f, (Always, Eventually)):
            body = _values(f.body, trace, memo)
            acc = isinstance(f, Always)
            for i in range(n - 1, -1, -1):
                acc = (acc and body[i]) if isinstance(f, Always) else (acc or body[i])
                out[i] = acc
        else:
            left, right = _values(f.left, trace, memo), _values(f.right, trace, memo)
            acc = isinstance(f, WeakUntil)
            for i in range(n - 1, -1, -1):
                acc = right[i] or (left[i] and acc)
                out[i] = acc
    # Keep f alive so its id is not reused while the memo exists.
    memo[key] = (f, out)
    return out


def _witness(f: Formula, trace: Sequence[RiskState], memo: dict) -> int:
    if isinstance(f, Always):
        return _values(f.body, trace, memo).index(False)
    if isinstance(f, And):
        return min(_witness(g, trace, memo) for g in (f.left, f.right) if not _values(g, trace, memo)[0])
    return 0


def check_trace(f: Formula, trace: Sequence[RiskState]) -> TraceVerdict:
    """Evaluate ``f`` at position 0 of ``trace``.

    For a violated top-level ``Always`` the witness is the first position
    where its body fails; for a conjunction, the least witness among the
    violated conjuncts; otherwise 0.
    """
    if not trace:
        raise ValueError("empty trace")
    memo: dict = {}
    if _values(f, trace, memo)[0]:
        return TraceVerdict(True)
    return TraceVerdict(False, _witness(f, trace, memo))


def random_walks(rs: RiskStructure, walks: int, max_len: int, seed: int) -> list[tuple[RiskState, ...]]:
    """Seeded random walks from the initial state with at most ``max_len`` states each."""
    if walks < 1 or max_len < 1:
        raise ValueError("walks and max_len must be positive")
    rng = random.Random(seed)
    g = rs.graph
    runs = []
    for _ in range(walks):
        s = 0
        path = [s]
        while len(path) < max_len and g.out_edges[s]:
            s = g.target[rng.choice(g.out_edges[s])]
            path.append(s)
        runs.append(tuple(rs.states[i] for i in path))
    return runs


def check_structure(rs: RiskStructure, f: Formula, walks: int, max_len: int, seed: int) -> list[TraceVerdict]:
    return [check_trace(f, run) for run in random_walks(rs, walks, max_len, seed)]


# Text syntax -----------------------------------------------------------------

_PREDICATES = {
    "active": Phase.ACTIVE,
    "inactive": Phase.INACTIVE,
    "mitigated": Phase.MITIGATED,
    "mishap": Phase.MISHAP,
}
_PRED_NAMES = {v: k for k, v in _PREDICATES.items()}
_TOKEN = re.compile(r"\s*(->|[()!&|]|[A-Za-z_][A-Za-z0-9_]*)")


class FormulaSyntaxError(ValueError):
    pass


def _tokenize(text: str) -> list[str]:
    tokens, pos = [], 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise FormulaSyntaxError(f"unexpected character {text[pos]!r} at offset {pos}")
        tokens.append(m.group(1))
        pos = m.end()
    return tokens


class _FormulaParser:
    # implies := or ('->' implies)?     right associative
    # or := and ('|' and)* ; and := until ('&' until)*
    # until := unary (('U' | 'W') until)?  right associative
    # unary := ('!' | 'G' | 'F' | 'O') unary | '(' implies ')' | atom | true | false
    def __init__(self, tokens: list[str]):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> Optional[str]:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self, expected: Optional[str] = None) -> str:
        tok = self.peek()
        if tok is None or (expected is not None and tok != expected):
            want = repr(expected) if expected else "more input"
            raise FormulaSyntaxError(f"expected {want}, found {tok!r}" if tok else f"expected {want} at end")
        self.pos += 1
        return tok

    def implies(self) -> Formula:
        left = self.disj()
        if self.peek() == "->":
            self.take()
            return Implies(left, self.implies())
        return left

    def disj(self) -> Formula:
        node = self.conj()
        while self.peek() == "|":
            self.take()
            node = Or(node, self.conj())
        return node

    def conj(self) -> Formula:
        node = self.until()
        while self.peek() == "&":
            self.take()
            node = And(node, self.until())
        return node

    def until(self) -> Formula:
        left = self.unary()
        op = self.peek()
        if op in ("U", "W"):
            self.take()
            right = self.until()
            return Until(left, right) if op == "U" else WeakUntil(left, right)
        return left

    def unary(self) -> Formula:
        tok = self.take()
        if tok == "!":
            return Not(self.unary())
        if tok in ("G", "F", "O"):
            return {"G": Always, "F": Eventually, "O": Once}[tok](self.unary())
        if tok == "(":
            node = self.implies()
            self.take(")")
            return node
        if tok in ("true", "false"):
            return Const(tok == "true")
        if tok in _PREDICATES:
            self.take("(")
            factor = self.take()
            if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", factor):
                raise FormulaSyntaxError(f"expected a factor id, found {factor!r}")
            self.take(")")
            return AtomPhase(factor, _PREDICATES[tok])
        raise FormulaSyntaxError(f"unexpected token {tok!r}")


def parse_formula(text: str) -> Formula:
    p = _FormulaParser(_tokenize(text))
    f = p.implies()
    if p.peek() is not None:
        raise FormulaSyntaxError(f"unexpected token {p.peek()!r}")
    return f


_LEVEL = {Implies: 1, Or: 2, And: 3, Until: 4, WeakUntil: 4}


def format_formula(f: Formula) -> str:
    """Text that :func:`parse_formula` maps back to ``f``."""
    return _fmt(f, 0)


def _fmt(f: Formula, outer: int) -> str:
    if isinstance(f, Const):
        return "true" if f.value else "false"
    if isinstance(f, AtomPhase):
        return f"{_PRED_NAMES[f.phase]}({f.factor})"
    if isinstance(f, (Not, Always, Eventually, Once)):
        op = {Not: "!", Always: "G ", Eventually: "F ", Once: "O "}[type(f)]
        return op + _fmt(f.body, 5)
    level = _LEVEL[type(f)]
    op = {Implies: "->", Or: "|", And: "&", Until: "U", WeakUntil: "W"}[type(f)]
    if isinstance(f, (Implies, Until, WeakUntil)):
        text = f"{_fmt(f.left, level + 1)} {op} {_fmt(f.right, level)}"
    else:
        text = f"{_fmt(f.left, level)} {op} {_fmt(f.right, level + 1)}"
    return f"({text})" if level < outer else text
