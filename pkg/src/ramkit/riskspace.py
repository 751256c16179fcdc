"""Risk structures: constrained parallel composition of per-factor phase models."""

from __future__ import annotations

import os
from collections import deque
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Optional, Sequence

from ramkit import _pykernel
from ramkit.model import (
    ActionKind,
    ActionLabel,
    CausalFactor,
    CausalFactorModel,
    Constraint,
    ConstraintKind,
    Phase,
    effective_constraints,
    effective_factors,
    phase_symbol,
)

if os.environ.get("RAMKIT_PURE_PYTHON"):
    _ckernel = None
else:
    try:
        from ramkit import _ckernel
    except ImportError:  # extension not built
        _ckernel = None

BACKEND = "cython" if _ckernel is not None else "python"

# Widest state the compiled kernel packs into one 64-bit key.
CKERNEL_MAX_FACTORS = 21


@dataclass(frozen=True)
class RiskState:
    """Total assignment of a phase to every in-scope factor."""

    factors: tuple[str, ...]
    phases: tuple[Phase, ...]

    def __post_init__(self) -> None:
        if len(self.factors) != len(self.phases):
            raise ValueError("one phase per factor required")

    @classmethod
    def zero(cls, factors: Sequence[str]) -> "RiskState":
        return cls(tuple(factors), (Phase.INACTIVE,) * len(factors))

    @classmethod
    def from_phases(cls, factors: Sequence[str], phases: dict[str, Phase]) -> "RiskState":
        unknown = set(phases) - set(factors)
        if unknown:
            raise KeyError(f"factors not in scope: {sorted(unknown)}")
        return cls(tuple(factors), tuple(phases.get(f, Phase.INACTIVE) for f in factors))

    @classmethod
    def from_masks(cls, factors: tuple[str, ...], masks: tuple[int, int, int]) -> "RiskState":
        a, m, x = masks
        phases = []
        for i in range(len(factors)):
            bit = 1 << i
            if a & bit:
                phases.append(Phase.ACTIVE)
            elif m & bit:
                phases.append(Phase.MITIGATED)
            elif x & bit:
                phases.append(Phase.MISHAP)
            else:
                phases.append(Phase.INACTIVE)
        return cls(factors, tuple(phases))

    def masks(self) -> tuple[int, int, int]:
        a = m = x = 0
        for i, p in enumerate(self.phases):
            if p is Phase.ACTIVE:
                a |= 1 << i
            elif p is Phase.MITIGATED:
                m |= 1 << i
            elif p is Phase.MISHAP:
                x |= 1 << i
        return a, m, x

    def __getitem__(self, factor: str) -> Phase:
        return self.phases[self.factors.index(factor)]

    def as_dict(self) -> dict[str, Phase]:
        return dict(zip(self.factors, self.phases))

    @property
    def is_zero(self) -> bool:
        return all(p is Phase.INACTIVE for p in self.phases)

    def in_phase(self, phase: Phase) -> tuple[str, ...]:
        return tuple(f for f, p in zip(self.factors, self.phases) if p is phase)

    def risk_count(self) -> int:
        """Number of factors that are active or in mishap."""
        return sum(p in (Phase.ACTIVE, Phase.MISHAP) for p in self.phases)

    def label(self) -> str:
        """Concatenated symbols of the non-inactive factors, e.g. ``W~O_C``."""
        text = "".join(phase_symbol(p, f) for f, p in zip(self.factors, self.phases))
        return text or "0"

    def spec(self) -> str:
        """Comma-separated form accepted by :func:`parse_state`, e.g. ``W,~O,_C``."""
        return ",".join(phase_symbol(p, f) for f, p in zip(self.factors, self.phases) if p) or "0"

    def __str__(self) -> str:
        return self.label()


@dataclass(frozen=True)
class RiskTransition:
    source: RiskState
    label: ActionLabel
    target: RiskState


@dataclass(frozen=True)
class StructureStats:
    state_count: int
    transition_count: int
    endangerment_count: int
    mitigation_count: int
    mishap_state_count: int

    def as_tuple(self) -> tuple[int, int, int, int, int]:
        return (
            self.state_count,
            self.transition_count,
            self.endangerment_count,
            self.mitigation_count,
            self.mishap_state_count,
        )


@dataclass(frozen=True, eq=False)
class StateGraph:
    """Index-based encoding of a risk structure as produced by the kernels.

    State ``i`` has phase masks ``active[i]``, ``mitigated[i]`` and
    ``mishap[i]``; transition ``j`` goes from ``source[j]`` to ``target[j]``
    by action ``kind[j]`` on factor ``factor[j]``. State 0 is the initial one.
    """

    active: Sequence[int]
    mitigated: Sequence[int]
    mishap: Sequence[int]
    source: Sequence[int]
    factor: Sequence[int]
    kind: Sequence[int]
    target: Sequence[int]

    @classmethod
    def from_kernel(cls, result) -> "StateGraph":
        (a, m, x), (src, fac, kind, dst) = result
        return cls(a, m, x, src, fac, kind, dst)

    @property
    def state_count(self) -> int:
        return len(self.active)

    @property
    def transition_count(self) -> int:
        return len(self.source)

    def masks(self, i: int) -> tuple[int, int, int]:
        return self.active[i], self.mitigated[i], self.mishap[i]

    @cached_property
    def out_edges(self) -> tuple[tuple[int, ...], ...]:
        out: list[list[int]] = [[] for _ in range(self.state_count)]
        for j, s in enumerate(self.source):
            out[s].append(j)
        return tuple(map(tuple, out))

    @cached_property
    def in_edges(self) -> tuple[tuple[int, ...], ...]:
        inc: list[list[int]] = [[] for _ in range(self.state_count)]
        for j, t in enumerate(self.target):
            inc[t].append(j)
        return tuple(map(tuple, inc))


@dataclass(frozen=True, eq=False)
class RiskStructure:
    """Explicit labeled transition system of one situation.

    ``states`` lists the states reachable from ``initial`` in breadth-first
    discovery order; ``initial`` is the all-inactive state unless the
    structure was built from another start. States and transitions are
    materialized from ``graph`` on first access.
    """

    situation: str
    factors: tuple[CausalFactor, ...]
    graph: StateGraph

    @cached_property
    def factor_ids(self) -> tuple[str, ...]:
        return tuple(f.id for f in self.factors)

    @cached_property
    def labels(self) -> dict[tuple[int, int], ActionLabel]:
        return {(i, int(k)): f.label(k) for i, f in enumerate(self.factors) for k in ActionKind}

    @cached_property
    def states(self) -> tuple[RiskState, ...]:
        g, ids = self.graph, self.factor_ids
        return tuple(RiskState.from_masks(ids, g.masks(i)) for i in range(g.state_count))

    @cached_property
    def transitions(self) -> tuple[RiskTransition, ...]:
        g, states, labels = self.graph, self.states, self.labels
        return tuple(
            RiskTransition(states[s], labels[i, k], states[t])
            for s, i, k, t in zip(g.source, g.factor, g.kind, g.target)
        )

    @property
    def initial(self) -> RiskState:
        return self.states[0]

    @cached_property
    def actions(self) -> frozenset[ActionLabel]:
        return frozenset(self.labels[key] for key in set(zip(self.graph.factor, self.graph.kind)))

    @cached_property
    def zero(self) -> RiskState:
        return RiskState.zero(self.factor_ids)

    @cached_property
    def index(self) -> dict[RiskState, int]:
        return {s: i for i, s in enumerate(self.states)}

    @cached_property
    def outgoing(self) -> dict[RiskState, tuple[RiskTransition, ...]]:
        ts = self.transitions
        return {s: tuple(ts[j] for j in js) for s, js in zip(self.states, self.graph.out_edges)}

    @cached_property
    def incoming(self) -> dict[RiskState, tuple[RiskTransition, ...]]:
        ts = self.transitions
        return {s: tuple(ts[j] for j in js) for s, js in zip(self.states, self.graph.in_edges)}

    def label_of(self, j: int) -> ActionLabel:
        return self.labels[self.graph.factor[j], self.graph.kind[j]]

    def __contains__(self, state: RiskState) -> bool:
        return state in self.index

    def state(self, spec: str) -> RiskState:
        """Look up a state from the ``A,~B,_C`` notation (``0`` for none)."""
        return parse_state(self.factor_ids, spec)


def parse_state(factors: Sequence[str], spec: str) -> RiskState:
    phases: dict[str, Phase] = {}
    spec = spec.strip()
    if spec and spec != "0":
        for item in spec.split(","):
            item = item.strip()
            phase = Phase.ACTIVE
            if item.startswith("~"):
                phase, item = Phase.MITIGATED, item[1:]
            elif item.startswith("_"):
                phase, item = Phase.MISHAP, item[1:]
            if item not in factors:
                raise KeyError(f"unknown factor {item!r} in state {spec!r}")
            if item in phases:
                raise ValueError(f"factor {item!r} listed twice in state {spec!r}")
            phases[item] = phase
    return RiskState.from_phases(factors, phases)


@dataclass(frozen=True)
class CompiledScope:
    """Integer encoding of a factor scope and its constraints for the kernels."""

    n: int
    flags: tuple[int, ...]
    req: tuple[int, ...]
    block: tuple[int, ...]
    causes: tuple[tuple[int, ...], ...]
    excl: tuple[int, ...]

    @classmethod
    def build(cls, factors: Sequence[CausalFactor], constraints: Iterable[Constraint]) -> "CompiledScope":
        pos = {f.id: i for i, f in enumerate(factors)}
        n = len(factors)
        flags = tuple(
            (_pykernel.MISHAP if f.mishap else 0)
            | (_pykernel.DIRECT if f.direct else 0)
            | (_pykernel.REENDANGER if f.re_endanger else 0)
            for f in factors
        )
        req = [0] * n
        block = [0] * n
        excl = [0] * n
        causes: list[set[int]] = [set() for _ in range(n)]
        for c in constraints:
            if c.left not in pos or c.right not in pos:
                continue
            left, right = pos[c.left], pos[c.right]
            if c.kind is ConstraintKind.REQUIRES:
                req[left] |= 1 << right
            elif c.kind is ConstraintKind.CAUSES:
                causes[left].add(right)
            elif c.kind is ConstraintKind.DENIES:
                block[right] |= 1 << left
            else:
                block[right] |= 1 << left
                excl[left] |= 1 << right
        return cls(n, flags, tuple(req), tuple(block), tuple(tuple(sorted(c)) for c in causes), tuple(excl))

    def args(self) -> tuple:
        return (self.n, self.flags, self.req, self.block, self.causes, self.excl)


def compose_factors(
    factors: Sequence[CausalFactor],
    constraints: Iterable[Constraint] = (),
    situation: str = "",
    initial: Optional[RiskState] = None,
    backend: Optional[str] = None,
) -> RiskStructure:
    """Interleaving product of the factors' phase models under ``constraints``.

    Constraints mentioning factors outside ``factors`` are ignored.
    ``backend`` forces ``"python"`` or ``"cython"``; by default the compiled
    kernel is used when available and the scope fits in it.
    """
    factors = tuple(factors)
    ids = tuple(f.id for f in factors)
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate factor in scope")
    if initial is not None and initial.factors != ids:
        raise ValueError("initial state does not match the factor scope")
    scope = CompiledScope.build(factors, constraints)
    start = initial.masks() if initial is not None else (0, 0, 0)
    kernel = _select_kernel(backend, len(factors))
    return RiskStructure(situation, factors, StateGraph.from_kernel(kernel.explore(*scope.args(), start)))


def _select_kernel(backend: Optional[str], n: int):
    if backend is None:
        return _ckernel if _ckernel is not None and n <= CKERNEL_MAX_FACTORS else _pykernel
    if backend == "python":
        return _pykernel
    if backend == "cython":
        if _ckernel is None:
            raise RuntimeError("compiled kernel is not available")
        if n > CKERNEL_MAX_FACTORS:
            raise ValueError(f"compiled kernel supports at most {CKERNEL_MAX_FACTORS} factors")
        return _ckernel
    raise ValueError(f"unknown backend {backend!r}")


def expand_phase_model(factor: CausalFactor) -> RiskStructure:
    """The phase model of a single factor."""
    return compose_factors((factor,), situation=factor.id)


def scope_factors(model: CausalFactorModel, situation: str) -> tuple[CausalFactor, ...]:
    """Effective factors of ``situation`` in declaration order."""
    scope = effective_factors(model, situation)
    return tuple(f for fid, f in model.factors.items() if fid in scope)


def compose_situation(
    model: CausalFactorModel,
    situation: str,
    initial: Optional[RiskState] = None,
    backend: Optional[str] = None,
) -> RiskStructure:
    if situation not in model.situations:
        raise KeyError(f"unknown situation {situation!r}")
    return compose_factors(
        scope_factors(model, situation),
        effective_constraints(model, situation),
        situation=situation,
        initial=initial,
        backend=backend,
    )


def endangerment_subgraph(rs: RiskStructure) -> RiskStructure:
    """Endangerment-only part of ``rs`` reachable from its initial state."""
    g = rs.graph
    renumber = {0: 0}
    order = [0]
    kept: list[int] = []
    queue = deque(order)
    while queue:
        s = queue.popleft()
        for j in g.out_edges[s]:
            if g.kind[j] > ActionKind.MISHAP_STEP:
                continue
            kept.append(j)
            t = g.target[j]
            if t not in renumber:
                renumber[t] = len(order)
                order.append(t)
                queue.append(t)
    sub = StateGraph(
        [g.active[i] for i in order],
        [g.mitigated[i] for i in order],
        [g.mishap[i] for i in order],
        [renumber[g.source[j]] for j in kept],
        [g.factor[j] for j in kept],
        [g.kind[j] for j in kept],
        [renumber[g.target[j]] for j in kept],
    )
    return RiskStructure(rs.situation, rs.factors, sub)


def stats(rs: RiskStructure) -> StructureStats:
    g = rs.graph
    kinds = g.kind
    endangerments = kinds.count(ActionKind.ACTIVATE) + kinds.count(ActionKind.MISHAP_STEP)
    return StructureStats(
        state_count=g.state_count,
        transition_count=g.transition_count,
        endangerment_count=endangerments,
        mitigation_count=g.transition_count - endangerments,
        mishap_state_count=sum(1 for x in g.mishap if x),
    )
