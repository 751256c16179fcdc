# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled state-space kernel; same contract as ``ramkit._pykernel.explore``.

A state packs into one 64-bit key: active | mitigated << 21 | mishap << 42,
so at most 21 factors fit.
"""

from cpython cimport array
from cython.operator cimport dereference as deref
from libc.string cimport memcpy
from libc.stdint cimport uint64_t, int64_t
from libcpp.unordered_map cimport unordered_map
from libcpp.vector cimport vector

cdef enum:
    WIDTH = 21
    MAXF = 21
    MISHAP = 1
    DIRECT = 2
    REENDANGER = 4

cdef uint64_t FIELD = (<uint64_t>1 << WIDTH) - 1


cdef inline uint64_t pack(uint64_t a, uint64_t m, uint64_t x) nogil:
    return a | (m << WIDTH) | (x << (2 * WIDTH))


cdef struct Scope:
    int n
    int flags[MAXF]
    uint64_t req[MAXF]
    uint64_t block[MAXF]
    uint64_t excl[MAXF]
    int cause_start[MAXF + 1]
    int cause_list[MAXF * MAXF]


cdef uint64_t activate(const Scope* s, int i, uint64_t a, uint64_t m, uint64_t x) nogil:
    # Each activation (direct or propagated) excludes its targets before
    # further propagation is gated. A factor fires at most once.
    cdef int queue[MAXF]
    cdef int head = 0, tail = 0, k, y, src
    cdef uint64_t bit = (<uint64_t>1) << i, ybit
    cdef uint64_t fired = bit
    a = (a | bit) & ~s.excl[i]
    m = m & ~bit & ~s.excl[i]
    queue[tail] = i
    tail += 1
    while head < tail:
        src = queue[head]
        head += 1
        for k in range(s.cause_start[src], s.cause_start[src + 1]):
            y = s.cause_list[k]
            ybit = (<uint64_t>1) << y
            if (a | m | x | fired) & ybit:
                continue
            if (a & s.req[y]) != s.req[y] or (a & s.block[y]):
                continue
            a = (a | ybit) & ~s.excl[y]
            m = m & ~s.excl[y]
            fired |= ybit
            queue[tail] = y
            tail += 1
    return pack(a, m, x)


def explore(int n, flags, req, block, causes, excl, init=(0, 0, 0)):
    if n > MAXF:
        raise ValueError("too many factors for the compiled kernel")
    cdef Scope s
    cdef int i, k, pos = 0
    s.n = n
    for i in range(n):
        s.flags[i] = flags[i]
        s.req[i] = req[i]
        s.block[i] = block[i]
        s.excl[i] = excl[i]
        s.cause_start[i] = pos
        for k in causes[i]:
            s.cause_list[pos] = k
            pos += 1
    s.cause_start[n] = pos

    cdef unordered_map[uint64_t, int64_t] index
    cdef vector[uint64_t] states
    cdef vector[int64_t] tr_src, tr_dst
    cdef vector[int] tr_factor, tr_kind
    cdef uint64_t start = pack(init[0], init[1], init[2])
    index.reserve(1024)
    index.max_load_factor(0.5)
    states.push_back(start)
    index[start] = 0

    cdef size_t cur = 0
    cdef uint64_t key, a, m, x, bit, target
    cdef int f
    cdef int kinds[3]
    cdef uint64_t targets[3]
    cdef int count, j
    cdef int64_t t
    cdef unordered_map[uint64_t, int64_t].iterator it
    with nogil:
        while cur < states.size():
            key = states[cur]
            a = key & FIELD
            m = (key >> WIDTH) & FIELD
            x = (key >> (2 * WIDTH)) & FIELD
            for i in range(n):
                bit = (<uint64_t>1) << i
                f = s.flags[i]
                count = 0
                if a & bit:
                    if f & MISHAP:
                        kinds[count] = 1
                        targets[count] = pack(a & ~bit, m, x | bit)
                        count += 1
                    kinds[count] = 2
                    targets[count] = pack(a & ~bit, m | bit, x)
                    count += 1
                    if f & DIRECT:
                        kinds[count] = 4
                        targets[count] = pack(a & ~bit, m, x)
                        count += 1
                elif x & bit:
                    pass
                elif m & bit:
                    if (f & REENDANGER) and (a & s.req[i]) == s.req[i] and not (a & s.block[i]):
                        kinds[count] = 0
                        targets[count] = activate(&s, i, a, m, x)
                        count += 1
                    kinds[count] = 3
                    targets[count] = pack(a, m & ~bit, x)
                    count += 1
                elif (a & s.req[i]) == s.req[i] and not (a & s.block[i]):
                    kinds[count] = 0
                    targets[count] = activate(&s, i, a, m, x)
                    count += 1
                for j in range(count):
                    target = targets[j]
                    it = index.find(target)
                    if it == index.end():
                        t = <int64_t>states.size()
                        index[target] = t
                        states.push_back(target)
                    else:
                        t = deref(it).second
                    tr_src.push_back(<int64_t>cur)
                    tr_factor.push_back(i)
                    tr_kind.push_back(kinds[j])
                    tr_dst.push_back(t)
            cur += 1

    cdef size_t ns = states.size(), nt = tr_src.size()
    cdef array.array qtemplate = array.array("Q")
    cdef array.array out_a = array.clone(qtemplate, ns, False)
    cdef array.array out_m = array.clone(qtemplate, ns, False)
    cdef array.array out_x = array.clone(qtemplate, ns, False)
    for cur in range(ns):
        key = states[cur]
        out_a.data.as_ulonglongs[cur] = key & FIELD
        out_m.data.as_ulonglongs[cur] = (key >> WIDTH) & FIELD
        out_x.data.as_ulonglongs[cur] = (key >> (2 * WIDTH)) & FIELD
    cdef array.array out_src = array.clone(array.array("q"), nt, False)
    cdef array.array out_dst = array.clone(array.array("q"), nt, False)
    cdef array.array out_factor = array.clone(array.array("i"), nt, False)
    cdef array.array out_kind = array.clone(array.array("i"), nt, False)
    if nt:
        memcpy(out_src.data.as_voidptr, tr_src.data(), nt * sizeof(int64_t))
        memcpy(out_dst.data.as_voidptr, tr_dst.data(), nt * sizeof(int64_t))
        memcpy(out_factor.data.as_voidptr, tr_factor.data(), nt * sizeof(int))
        memcpy(out_kind.data.as_voidptr, tr_kind.data(), nt * sizeof(int))
    return (out_a, out_m, out_x), (out_src, out_factor, out_kind, out_dst)
