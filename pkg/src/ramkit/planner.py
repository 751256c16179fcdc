"""Mitigation analysis over risk structures: plans, strategy coverage, risk budgets."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

from ramkit.model import ActionKind, ActionLabel, Phase
from ramkit.riskspace import RiskState, RiskStructure

DEFAULT_CYCLE_CAP = 100
# Edge expansions allowed to the cycle search before it reports truncation.
CYCLE_SEARCH_BUDGET = 2_000_000


@dataclass(frozen=True)
class MitigationPlan:
    source: RiskState
    actions: tuple[ActionLabel, ...]
    target: RiskState

    def __len__(self) -> int:
        return len(self.actions)


@dataclass(frozen=True)
class StrategyReport:
    """Partition of a structure's states by how they can be brought back to 0.

    ``coverable`` holds 0 and every state with a run-time mitigation path to
    it; ``off_repair_only`` the states that need an off-line step on every
    such path; ``stranded`` the rest. ``cycles`` are simple state cycles mixing
    endangerments and mitigations, at most ``cycle_cap`` of them.
    """

    coverable: frozenset[RiskState]
    stranded: frozenset[RiskState]
    off_repair_only: frozenset[RiskState]
    cycles: tuple[tuple[RiskState, ...], ...]
    cycles_truncated: bool

    @property
    def has_strategy(self) -> bool:
        return not self.stranded and not self.off_repair_only


def _edge_classes(rs: RiskStructure) -> tuple[list[bool], list[bool]]:
    """Per transition: is it a run-time mitigation, is it any mitigation."""
    g = rs.graph
    n = len(rs.factors)
    runtime = [False] * (5 * n)
    anyway = [False] * (5 * n)
    for (i, k), label in rs.labels.items():
        anyway[5 * i + k] = label.is_mitigation
        runtime[5 * i + k] = label.is_mitigation and not label.offline
    codes = [5 * i + k for i, k in zip(g.factor, g.kind)]
    return [runtime[c] for c in codes], [anyway[c] for c in codes]


def _zero_index(rs: RiskStructure) -> Optional[int]:
    g = rs.graph
    for i in range(g.state_count):
        if not (g.active[i] or g.mitigated[i] or g.mishap[i]):
            return i
    return None


def _distances_to_zero(rs: RiskStructure, allowed: Sequence[bool]) -> dict[int, int]:
    """Backward BFS from 0 over the transitions flagged in ``allowed``."""
    zero = _zero_index(rs)
    if zero is None:
        return {}
    g = rs.graph
    dist = {zero: 0}
    queue = deque([zero])
    while queue:
        t = queue.popleft()
        for j in g.in_edges[t]:
            s = g.source[j]
            if s not in dist and allowed[j]:
                dist[s] = dist[t] + 1
                queue.append(s)
    return dist


def plan_from(rs: RiskStructure, state: RiskState) -> Optional[MitigationPlan]:
    """Shortest run-time mitigation path from ``state`` to 0, or None.

    Among equally short paths the one whose actions are smallest by
    (factor id, action kind), step by step, is returned.
    """
    if state not in rs.index:
        raise KeyError(f"state {state} is not in the structure of {rs.situation!r}")
    runtime, _ = _edge_classes(rs)
    dist = _distances_to_zero(rs, runtime)
    s = rs.index[state]
    if s not in dist:
        return None
    g = rs.graph
    actions = []
    while dist[s]:
        step = min(
            (j for j in g.out_edges[s] if runtime[j] and dist.get(g.target[j]) == dist[s] - 1),
            key=lambda j: rs.label_of(j).sort_key(),
        )
        actions.append(rs.label_of(step))
        s = g.target[step]
    return MitigationPlan(state, tuple(actions), rs.states[s])


def strategy_report(rs: RiskStructure, cycle_cap: int = DEFAULT_CYCLE_CAP) -> StrategyReport:
    runtime_edges, any_edges = _edge_classes(rs)
    runtime = _distances_to_zero(rs, runtime_edges)
    anyway = _distances_to_zero(rs, any_edges)
    coverable, stranded, offline = [], [], []
    for i, s in enumerate(rs.states):
        if i in runtime:
            coverable.append(s)
        elif i in anyway:
            offline.append(s)
        else:
            stranded.append(s)
    cycles, truncated = mixed_cycles(rs, cycle_cap)
    return StrategyReport(frozenset(coverable), frozenset(stranded), frozenset(offline), cycles, truncated)


def _simple_cycles(n: int, succ, pred, budget: int):
    """Yield simple cycles as node lists, shortest first.

    Each cycle is rooted at its smallest node and produced once: a search
    rooted at ``r`` only visits nodes above ``r``, and is pruned by the
    distance back to ``r``. ``succ`` and ``pred`` map a node to its successor
    and predecessor nodes. Yields None once ``budget`` expansions are used up.
    """
    for length in range(1, n + 1):
        for root in range(n):
            dist = {root: 0}
            frontier = [root]
            for d in range(1, length):
                nxt = []
                for w in frontier:
                    for u in pred(w):
                        budget -= 1
                        if u > root and u not in dist:
                            dist[u] = d
                            nxt.append(u)
                frontier = nxt
                if not frontier:
                    break
            if budget < 0:
                yield None
                return
            path = [root]
            stack = [iter(succ(root))]
            while stack:
                k = len(path)
                for w in stack[-1]:
                    budget -= 1
                    if w == root:
                        if k == length:
                            yield list(path)
                    elif k < length and w in dist and k + dist[w] <= length and w not in path:
                        path.append(w)
                        stack.append(iter(succ(w)))
                        break
                else:
                    stack.pop()
                    path.pop()
                if budget < 0:
                    yield None
                    return


def mixed_cycles(
    rs: RiskStructure, cap: int = DEFAULT_CYCLE_CAP, budget: int = CYCLE_SEARCH_BUDGET
) -> tuple[tuple[tuple[RiskState, ...], ...], bool]:
    """Simple cycles containing at least one endangerment and one mitigation edge.

    Returns up to ``cap`` cycles and whether the search stopped early, either
    because more cycles exist or because the search budget ran out.
    """
    g = rs.graph
    succ_memo: dict[int, tuple[int, ...]] = {}

    def succ(v: int) -> tuple[int, ...]:
        if v not in succ_memo:
            succ_memo[v] = tuple(dict.fromkeys(g.target[j] for j in g.out_edges[v]))
        return succ_memo[v]

    def pred(v: int):
        return (g.source[j] for j in g.in_edges[v])

    def mixed(cycle: list[int]) -> bool:
        seen = set()
        for u, v in zip(cycle, cycle[1:] + cycle[:1]):
            seen.update(g.kind[j] <= ActionKind.MISHAP_STEP for j in g.out_edges[u] if g.target[j] == v)
        return len(seen) == 2

    found = []
    truncated = False
    for cycle in _simple_cycles(g.state_count, succ, pred, budget):
        if cycle is None:
            truncated = True
            break
        if not mixed(cycle):
            continue
        if len(found) == cap:
            truncated = True
            break
        found.append(cycle)
    states = rs.states
    return tuple(tuple(states[i] for i in c) for c in found), truncated


def risk_value(state: RiskState, weights: Mapping[str, float]) -> float:
    """Sum of weights of active factors plus twice the weight of factors in mishap."""
    total = 0.0
    for f, p in zip(state.factors, state.phases):
        if p is Phase.ACTIVE:
            total += weights[f]
        elif p is Phase.MISHAP:
            total += 2 * weights[f]
    return total


def check_budget(
    rs: RiskStructure, budget: float, weights: Optional[Mapping[str, float]] = None
) -> frozenset[RiskState]:
    """States whose risk value exceeds ``budget``; the others are budget-safe.

    Weights default to 1 for every factor.
    """
    if budget < 0:
        raise ValueError("budget must be non-negative")
    if weights is None:
        weights = {f: 1 for f in rs.factor_ids}
    missing = set(rs.factor_ids) - set(weights)
    if missing:
        raise KeyError(f"no weight for factors {sorted(missing)}")
    negative = sorted(f for f, w in weights.items() if w < 0)
    if negative:
        raise ValueError(f"negative weight for factors {negative}")
    return frozenset(s for s in rs.states if risk_value(s, weights) > budget)


def replay(rs: RiskStructure, start: RiskState, actions: Sequence[ActionLabel]) -> Optional[RiskState]:
    """Follow ``actions`` through ``rs`` from ``start``; None if one is not enabled."""
    state = start
    for action in actions:
        step = next((t for t in rs.outgoing[state] if t.label == action), None)
        if step is None:
            return None
        state = step.target
    return state


__all__ = [
    "DEFAULT_CYCLE_CAP",
    "MitigationPlan",
    "StrategyReport",
    "check_budget",
    "mixed_cycles",
    "plan_from",
    "replay",
    "risk_value",
    "strategy_report",
]
