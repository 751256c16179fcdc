"""Pure-Python state-space kernel (fallback for the compiled ``_ckernel``).

States are three bitmasks over factor indices: active, mitigated, mishap.
Factors in none of them are inactive.
"""

from __future__ import annotations

from array import array
from collections import deque

MISHAP = 1
DIRECT = 2
REENDANGER = 4

ACTIVATE, MISHAP_STEP, START_MITIGATE, END_MITIGATE, COMPLETE_MITIGATE = range(5)


def _activate(i, a, m, x, req, block, causes, excl):
    # Each activation (direct or propagated) excludes its targets before
    # further propagation is gated, like a sequence of single activations.
    # A factor fires at most once per transition, so excludes/causes rings
    # cannot oscillate.
    bit = 1 << i
    a = (a | bit) & ~excl[i]
    m = m & ~bit & ~excl[i]
    fired = bit
    queue = deque((i,))
    while queue:
        for y in causes[queue.popleft()]:
            ybit = 1 << y
            if (a | m | x | fired) & ybit:
                continue
            if a & req[y] != req[y] or a & block[y]:
                continue
            a = (a | ybit) & ~excl[y]
            m &= ~excl[y]
            fired |= ybit
            queue.append(y)
    return a, m, x


def successors(state, n, flags, req, block, causes, excl):
    """Yield ``(factor, kind, target)`` for every enabled action, in a fixed order."""
    a, m, x = state
    for i in range(n):
        bit = 1 << i
        f = flags[i]
        if a & bit:
            if f & MISHAP:
                yield i, MISHAP_STEP, (a & ~bit, m, x | bit)
            yield i, START_MITIGATE, (a & ~bit, m | bit, x)
            if f & DIRECT:
                yield i, COMPLETE_MITIGATE, (a & ~bit, m, x)
        elif x & bit:
            continue
        elif m & bit:
            if f & REENDANGER and a & req[i] == req[i] and not a & block[i]:
                yield i, ACTIVATE, _activate(i, a, m, x, req, block, causes, excl)
            yield i, END_MITIGATE, (a, m & ~bit, x)
        elif a & req[i] == req[i] and not a & block[i]:
            yield i, ACTIVATE, _activate(i, a, m, x, req, block, causes, excl)


def explore(n, flags, req, block, causes, excl, init=(0, 0, 0)):
    """Breadth-first exploration from ``init``.

    Returns ``(active, mitigated, mishap)`` mask columns of the reachable
    states in discovery order and ``(source, factor, kind, target)``
    columns of the transitions, all as ``array.array``.
    """
    index = {init: 0}
    states = [init]
    src, fac, kinds, dst = [], [], [], []
    k = 0
    while k < len(states):
        for i, kind, target in successors(states[k], n, flags, req, block, causes, excl):
            t = index.get(target)
            if t is None:
                t = index[target] = len(states)
                states.append(target)
            src.append(k)
            fac.append(i)
            kinds.append(kind)
            dst.append(t)
        k += 1
    columns = tuple(array("Q", col) for col in zip(*states))
    return columns, (array("q", src), array("i", fac), array("i", kinds), array("q", dst))
