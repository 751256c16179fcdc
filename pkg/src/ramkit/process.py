"""Driving processes over situations.

Expressions are built from situations with sequence (``;``), choice (``|``),
parallel composition (``||``) and repetition (``*``). Parallel composition is
restricted to superimposing aspects onto situations: at least one side must
consist of aspects only.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from functools import cached_property
from typing import Iterator, Optional, Union

from ramkit.model import (
    CausalFactorModel,
    ConstraintKind,
    Diagnostic,
    Phase,
    Severity,
    effective_constraints,
    effective_factors,
    model_cache,
)


@dataclass(frozen=True)
class Atom:
    situation: str


@dataclass(frozen=True)
class Ref:
    name: str


@dataclass(frozen=True)
class Seq:
    left: "ProcessExpr"
    right: "ProcessExpr"


@dataclass(frozen=True)
class Choice:
    left: "ProcessExpr"
    right: "ProcessExpr"


@dataclass(frozen=True)
class Par:
    left: "ProcessExpr"
    right: "ProcessExpr"


@dataclass(frozen=True)
class Star:
    body: "ProcessExpr"


ProcessExpr = Union[Atom, Ref, Seq, Choice, Par, Star]

_PRECEDENCE = {Seq: 1, Choice: 2, Par: 3}
_SYMBOL = {Seq: " ; ", Choice: " | ", Par: " || "}


def format_expr(expr: ProcessExpr) -> str:
    """Render ``expr`` with the fewest parentheses that re-parse to the same tree."""
    if isinstance(expr, (Atom, Ref)):
        return expr.situation if isinstance(expr, Atom) else expr.name
    if isinstance(expr, Star):
        inner = format_expr(expr.body)
        if not isinstance(expr.body, (Atom, Ref, Star)):
            inner = f"({inner})"
        return inner + "*"
    prec = _PRECEDENCE[type(expr)]
    left = format_expr(expr.left)
    right = format_expr(expr.right)
    # Binary operators associate to the left.
    if type(expr.left) in _PRECEDENCE and _PRECEDENCE[type(expr.left)] < prec:
        left = f"({left})"
    if type(expr.right) in _PRECEDENCE and _PRECEDENCE[type(expr.right)] <= prec:
        right = f"({right})"
    return left + _SYMBOL[type(expr)] + right


def subexpressions(expr: ProcessExpr) -> Iterator[ProcessExpr]:
    yield expr
    if isinstance(expr, Star):
        yield from subexpressions(expr.body)
    elif isinstance(expr, (Seq, Choice, Par)):
        yield from subexpressions(expr.left)
        yield from subexpressions(expr.right)


class ProcessError(ValueError):
    pass


class _Analysis:
    """Fixpoint analyses over the (possibly recursive) process definitions."""

    def __init__(self, model: CausalFactorModel):
        self.model = model
        self.defs = model.processes
        # Greatest fixpoint: a definition is aspect-only unless shown otherwise.
        self.aspect_only = self._lfp_bool(self._aspect_only, initial=True)
        self.aspects_of = self._lfp_sets(self._aspects)

    @cached_property
    def nullable(self) -> dict[str, bool]:
        return self._lfp_bool(self._nullable)

    @cached_property
    def ends(self) -> dict[str, bool]:
        return self._lfp_bool(self._ends)

    @cached_property
    def first(self) -> dict[str, frozenset]:
        return self._lfp_sets(self._first)

    @cached_property
    def last(self) -> dict[str, frozenset]:
        return self._lfp_sets(self._last)

    def is_aspect(self, situation: str) -> bool:
        s = self.model.situations.get(situation)
        return s is not None and s.is_aspect

    def _lfp_bool(self, rule, initial=False):
        env = {name: initial for name in self.defs}
        changed = True
        while changed:
            changed = False
            for name, body in self.defs.items():
                value = rule(body, env)
                if value != env[name]:
                    env[name] = value
                    changed = True
        return env

    def _lfp_sets(self, rule):
        env: dict[str, frozenset] = {name: frozenset() for name in self.defs}
        changed = True
        while changed:
            changed = False
            for name, body in self.defs.items():
                value = rule(body, env)
                if value != env[name]:
                    env[name] = value
                    changed = True
        return env

    # An expression is aspect-only when every situation it mentions is an aspect.
    def _aspect_only(self, e, env) -> bool:
        if isinstance(e, Atom):
            return self.is_aspect(e.situation)
        if isinstance(e, Ref):
            return env.get(e.name, False)
        if isinstance(e, Star):
            return self._aspect_only(e.body, env)
        return self._aspect_only(e.left, env) and self._aspect_only(e.right, env)

    def _aspects(self, e, env) -> frozenset:
        if isinstance(e, Atom):
            return frozenset((e.situation,)) if self.is_aspect(e.situation) else frozenset()
        if isinstance(e, Ref):
            return env.get(e.name, frozenset())
        if isinstance(e, Star):
            return self._aspects(e.body, env)
        return self._aspects(e.left, env) | self._aspects(e.right, env)

    def expr_aspect_only(self, e) -> bool:
        return self._aspect_only(e, self.aspect_only)

    def carrier(self, e: Par):
        """The non-aspect operand of a superimposition (None if both are aspects)."""
        left_asp = self.expr_aspect_only(e.left)
        right_asp = self.expr_aspect_only(e.right)
        if left_asp and right_asp:
            return None
        if left_asp:
            return e.right
        if right_asp:
            return e.left
        raise ProcessError("parallel composition of two non-aspect processes")

    def _nullable(self, e, env) -> bool:
        if isinstance(e, Atom):
            return self.is_aspect(e.situation)
        if isinstance(e, Ref):
            return env.get(e.name, False)
        if isinstance(e, Star):
            return True
        if isinstance(e, Seq):
            return self._nullable(e.left, env) and self._nullable(e.right, env)
        if isinstance(e, Choice):
            return self._nullable(e.left, env) or self._nullable(e.right, env)
        body = self.carrier(e)
        return True if body is None else self._nullable(body, env)

    def _ends(self, e, env) -> bool:
        if isinstance(e, Atom):
            return True
        if isinstance(e, Ref):
            return env.get(e.name, False)
        if isinstance(e, Star):
            return True
        if isinstance(e, Seq):
            return self._ends(e.left, env) and self._ends(e.right, env)
        if isinstance(e, Choice):
            return self._ends(e.left, env) or self._ends(e.right, env)
        body = self.carrier(e)
        return True if body is None else self._ends(body, env)

    def _first(self, e, env) -> frozenset:
        if isinstance(e, Atom):
            return frozenset() if self.is_aspect(e.situation) else frozenset((e.situation,))
        if isinstance(e, Ref):
            return env.get(e.name, frozenset())
        if isinstance(e, Star):
            return self._first(e.body, env)
        if isinstance(e, Seq):
            result = self._first(e.left, env)
            if self._nullable(e.left, self.nullable):
                result |= self._first(e.right, env)
            return result
        if isinstance(e, Choice):
            return self._first(e.left, env) | self._first(e.right, env)
        body = self.carrier(e)
        return frozenset() if body is None else self._first(body, env)

    def _last(self, e, env) -> frozenset:
        if isinstance(e, Atom):
            return frozenset() if self.is_aspect(e.situation) else frozenset((e.situation,))
        if isinstance(e, Ref):
            return env.get(e.name, frozenset())
        if isinstance(e, Star):
            return self._last(e.body, env)
        if isinstance(e, Seq):
            if not self._ends(e.left, self.ends):
                return frozenset()
            result = self._last(e.right, env)
            if self._nullable(e.right, self.nullable):
                result |= self._last(e.left, env)
            return result
        if isinstance(e, Choice):
            return self._last(e.left, env) | self._last(e.right, env)
        body = self.carrier(e)
        return frozenset() if body is None else self._last(body, env)

    def first_of(self, e) -> frozenset:
        return self._first(e, self.first)

    def last_of(self, e) -> frozenset:
        return self._last(e, self.last)

    def ends_of(self, e) -> bool:
        return self._ends(e, self.ends)

    def start_refs(self, e) -> set[str]:
        """Process names that can be entered before any situation is visited."""
        if isinstance(e, Atom):
            return set()
        if isinstance(e, Ref):
            return {e.name}
        if isinstance(e, Star):
            return self.start_refs(e.body)
        if isinstance(e, Seq):
            refs = self.start_refs(e.left)
            if self._nullable(e.left, self.nullable):
                refs |= self.start_refs(e.right)
            return refs
        return self.start_refs(e.left) | self.start_refs(e.right)


def _unguarded_cycle(analysis: _Analysis) -> Optional[list[str]]:
    graph = {name: sorted(analysis.start_refs(body) & set(analysis.defs)) for name, body in analysis.defs.items()}
    state: dict[str, int] = {}
    stack: list[str] = []

    def visit(name: str) -> Optional[list[str]]:
        state[name] = 1
        stack.append(name)
        for nxt in graph[name]:
            if state.get(nxt) == 1:
                return stack[stack.index(nxt):] + [nxt]
            if nxt not in state:
                found = visit(nxt)
                if found:
                    return found
        stack.pop()
        state[name] = 2
        return None

    for name in sorted(graph):
        if name not in state:
            found = visit(name)
            if found:
                return found
    return None


def process_diagnostics(model: CausalFactorModel) -> list[Diagnostic]:
    """Reference, guardedness and superimposition checks of the process definitions."""
    diags: list[Diagnostic] = []

    def error(location: str, message: str, subject: tuple) -> None:
        diags.append(Diagnostic(Severity.ERROR, location, message, subject))

    for name in sorted(set(model.processes) & set(model.situations)):
        error(f"process {name}", f"name {name!r} is both a process and a situation", ("process", name))
    if model.root is not None and model.root not in model.processes:
        error("root", f"unknown process {model.root!r}", ("root",))
    for name in sorted(model.processes):
        for e in subexpressions(model.processes[name]):
            if isinstance(e, Atom) and e.situation not in model.situations:
                error(f"process {name}", f"unknown situation {e.situation!r}", ("process", name))
            elif isinstance(e, Ref) and e.name not in model.processes:
                error(f"process {name}", f"unknown process {e.name!r}", ("process", name))
    if diags:
        return diags

    analysis = _Analysis(model)
    for name in sorted(model.processes):
        for e in subexpressions(model.processes[name]):
            if isinstance(e, Par):
                try:
                    analysis.carrier(e)
                except ProcessError as exc:
                    error(f"process {name}", f"{exc}: {format_expr(e)}", ("process", name))
    if diags:
        return diags
    cycle = _unguarded_cycle(analysis)
    if cycle:
        error(f"process {cycle[0]}", "unguarded recursion: " + " -> ".join(cycle), ("process", cycle[0]))
    return diags


def _analysis(model: CausalFactorModel) -> _Analysis:
    cache = model_cache(model)
    if "analysis" not in cache:
        problems = [d for d in process_diagnostics(model) if d.severity is Severity.ERROR]
        if problems:
            raise ProcessError("; ".join(str(d) for d in problems))
        cache["analysis"] = _Analysis(model)
    return cache["analysis"]


def _entry_points(model: CausalFactorModel) -> list[ProcessExpr]:
    if model.root is not None:
        return [Ref(model.root)]
    return [Ref(name) for name in sorted(model.processes)]


def superimposed_aspects(model: CausalFactorModel) -> dict[str, frozenset[str]]:
    """For each atomic situation, the aspects composed in parallel with any occurrence of it."""
    if not model.processes:
        return {}
    cache = model_cache(model)
    if "aspects" not in cache:
        cache["aspects"] = _superimposed_aspects(model)
    return cache["aspects"]


def _superimposed_aspects(model: CausalFactorModel) -> dict[str, frozenset[str]]:
    analysis = _analysis(model)
    contexts: dict[str, set[str]] = {}
    seen: set[tuple[str, frozenset]] = set()
    work: list[tuple[ProcessExpr, frozenset]] = [(e, frozenset()) for e in _entry_points(model)]
    while work:
        e, ctx = work.pop()
        if isinstance(e, Atom):
            if not analysis.is_aspect(e.situation):
                contexts.setdefault(e.situation, set()).update(ctx)
        elif isinstance(e, Ref):
            if (e.name, ctx) not in seen:
                seen.add((e.name, ctx))
                work.append((model.processes[e.name], ctx))
        elif isinstance(e, Star):
            work.append((e.body, ctx))
        elif isinstance(e, Par):
            body = analysis.carrier(e)
            if body is not None:
                other = e.left if body is e.right else e.right
                work.append((body, ctx | analysis._aspects(other, analysis.aspects_of)))
        else:
            work.append((e.left, ctx))
            work.append((e.right, ctx))
    return {s: frozenset(a) for s, a in contexts.items()}


def aspect_receivers(model: CausalFactorModel) -> dict[str, frozenset[str]]:
    """For each aspect, the atomic situations it is superimposed on."""
    receivers: dict[str, set[str]] = {}
    for situation, aspects in superimposed_aspects(model).items():
        for a in aspects:
            receivers.setdefault(a, set()).add(situation)
    return {a: frozenset(s) for a, s in receivers.items()}


@dataclass(frozen=True)
class SuccessorGraph:
    """Situations of a process and the successor relation between them.

    ``initial`` holds the situations a run can start in.
    """

    nodes: frozenset[str]
    edges: frozenset[tuple[str, str]]
    initial: frozenset[str]

    def successors(self, situation: str) -> tuple[str, ...]:
        return tuple(sorted(t for s, t in self.edges if s == situation))


def successor_graph(model: CausalFactorModel, root: Optional[ProcessExpr] = None) -> SuccessorGraph:
    """Successor relation of the process rooted at ``root`` (default: the model's root).

    Computed from first/last/follow sets of the recursive definitions, so
    runs are never enumerated.
    """
    analysis = _analysis(model)
    entries = [root] if root is not None else _entry_points(model)
    nodes: set[str] = set()
    edges: set[tuple[str, str]] = set()
    initial: set[str] = set()
    visited: set[str] = set()
    work = list(entries)
    for e in entries:
        initial |= analysis.first_of(e)
    while work:
        e = work.pop()
        if isinstance(e, Atom):
            if not analysis.is_aspect(e.situation):
                nodes.add(e.situation)
        elif isinstance(e, Ref):
            if e.name not in visited:
                visited.add(e.name)
                work.append(model.processes[e.name])
        elif isinstance(e, Star):
            work.append(e.body)
            edges.update((s, t) for s in analysis.last_of(e.body) for t in analysis.first_of(e.body))
        elif isinstance(e, Seq):
            work.append(e.left)
            if analysis.ends_of(e.left):
                work.append(e.right)
                edges.update((s, t) for s in analysis.last_of(e.left) for t in analysis.first_of(e.right))
        elif isinstance(e, Choice):
            work.append(e.left)
            work.append(e.right)
        else:
            body = analysis.carrier(e)
            if body is not None:
                work.append(body)
    return SuccessorGraph(frozenset(nodes), frozenset(edges), frozenset(initial))


def translate_state(model: CausalFactorModel, state, target: str):
    """Carry ``state`` into ``target``: shared factors keep their phase, new ones start inactive."""
    from ramkit.riskspace import RiskState, scope_factors

    ids = tuple(f.id for f in scope_factors(model, target))
    phases = state.as_dict()
    return RiskState(ids, tuple(phases.get(f, Phase.INACTIVE) for f in ids))


def jump_targets(model: CausalFactorModel, situation: str, state, graph: Optional[SuccessorGraph] = None):
    """Risk states reached by jumping from ``state`` in ``situation`` to each successor situation."""
    graph = graph or successor_graph(model)
    if situation not in graph.nodes:
        raise KeyError(f"situation {situation!r} is not in the successor graph")
    if set(state.factors) != set(effective_factors(model, situation)):
        raise ValueError(f"state does not belong to situation {situation!r}")
    return tuple((t, translate_state(model, state, t)) for t in graph.successors(situation))


@dataclass(frozen=True)
class ScenarioRow:
    step: int
    situation: str
    cf_count: int
    initial_state: object  # RiskState
    state_count: int
    transition_count: int


@dataclass(frozen=True)
class Scenario:
    rows: tuple[ScenarioRow, ...]
    seed: int


SAMPLE_ATTEMPTS = 64


def sample_initial_state(model: CausalFactorModel, situation: str, rng: random.Random, p_activate: float = 0.5):
    """Random constraint-consistent state of ``situation``.

    Each factor is activated with probability ``p_activate``; the draw is closed
    under causes and excludes and rejected when a requires constraint is
    violated. After ``SAMPLE_ATTEMPTS`` rejections the all-inactive state is used.
    """
    from ramkit.riskspace import RiskState, scope_factors

    ids = tuple(f.id for f in scope_factors(model, situation))
    constraints = effective_constraints(model, situation)
    by_kind: dict[ConstraintKind, list] = {k: [] for k in ConstraintKind}
    for c in sorted(constraints, key=lambda c: c.sort_key()):
        by_kind[c.kind].append(c)

    for _ in range(SAMPLE_ATTEMPTS):
        active = {f for f in ids if rng.random() < p_activate}
        changed = True
        while changed:
            changed = False
            for c in by_kind[ConstraintKind.CAUSES]:
                if c.left in active and c.right not in active:
                    active.add(c.right)
                    changed = True
        for c in by_kind[ConstraintKind.EXCLUDES]:
            if c.left in active:
                active.discard(c.right)
        if all(c.right in active for c in by_kind[ConstraintKind.REQUIRES] if c.left in active):
            return RiskState(ids, tuple(Phase.ACTIVE if f in active else Phase.INACTIVE for f in ids))
    return RiskState.zero(ids)


def sample_scenario(
    model: CausalFactorModel,
    start: str,
    steps: int,
    seed: int,
    p_activate: float = 0.5,
    backend: Optional[str] = None,
) -> Scenario:
    """Random run through the successor graph with per-step risk statistics.

    Deterministic for a given ``(model, start, steps, seed, p_activate)``.
    """
    from ramkit.riskspace import compose_situation, stats

    if steps < 1:
        raise ValueError("steps must be at least 1")
    if not 0.0 <= p_activate <= 1.0:
        raise ValueError("p_activate must lie in [0, 1]")
    graph = successor_graph(model)
    if start not in graph.nodes:
        raise KeyError(f"situation {start!r} is not in the successor graph")
    rng = random.Random(seed)
    rows = []
    situation = start
    for step in range(1, steps + 1):
        initial = sample_initial_state(model, situation, rng, p_activate)
        st = stats(compose_situation(model, situation, initial=initial, backend=backend))
        rows.append(ScenarioRow(step, situation, len(initial.factors), initial, st.state_count, st.transition_count))
        successors = graph.successors(situation)
        if step == steps or not successors:
            break
        situation = rng.choice(successors)
    return Scenario(tuple(rows), seed)
