# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Dinic max-flow on a CSR residual graph (compiled kernel).

Capacities are float64 and are consumed strictly (residual admissibility is
``cap > 0``); every augmentation saturates at least one edge exactly (the
bottleneck is one of the path capacities, and ``c - c == 0.0`` in floats), and
the phase count is bounded by the node count independently of capacity
values, so termination is combinatorial.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

DEF INF = 1.7976931348623157e308


def max_flow(
    cnp.int64_t[::1] indptr,
    cnp.int32_t[::1] heads,
    cnp.int64_t[::1] erev,
    cnp.float64_t[::1] caps,
    Py_ssize_t s,
    Py_ssize_t t,
):
    """Run Dinic to completion.  ``caps`` is mutated into the residual graph.

    Returns (flow_value, from_source, to_sink): the flow value, the bool
    array of nodes reachable from ``s`` in the final residual graph (the
    smallest minimum cut's source side), and the bool array of nodes that can
    still reach ``t`` (whose complement is the largest minimum cut's source
    side).
    """
    cdef Py_ssize_t n = indptr.shape[0] - 1
    if s < 0 or s >= n or t < 0 or t >= n or s == t:
        raise ValueError("bad terminal nodes")

    level_np = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] level = level_np
    cdef cnp.int64_t[::1] it = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] queue = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] path_e = np.empty(n + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] path_v = np.empty(n + 2, dtype=np.int64)

    cdef double flow = 0.0
    cdef double bn
    cdef Py_ssize_t qh, qt, v, u, i, depth, d
    cdef cnp.int64_t e
    cdef bint advanced

    while True:
        for i in range(n):
            level[i] = -1
        level[s] = 0
        queue[0] = s
        qh = 0
        qt = 1
        while qh < qt:
            v = queue[qh]
            qh += 1
            for e in range(indptr[v], indptr[v + 1]):
                if caps[e] > 0.0:
                    u = heads[e]
                    if level[u] < 0:
                        level[u] = level[v] + 1
                        queue[qt] = u
                        qt += 1
        if level[t] < 0:
            break

        for i in range(n):
            it[i] = indptr[i]
        depth = 0
        path_v[0] = s
        v = s
        while True:
            if v == t:
                bn = INF
                d = 0
                for i in range(depth):
                    if caps[path_e[i]] < bn:
                        bn = caps[path_e[i]]
                        d = i
                for i in range(depth):
                    e = path_e[i]
                    caps[e] -= bn
                    caps[erev[e]] += bn
                flow += bn
                depth = d
                v = path_v[d]
                continue
            advanced = False
            while it[v] < indptr[v + 1]:
                e = it[v]
                if caps[e] > 0.0:
                    u = heads[e]
                    if level[u] == level[v] + 1:
                        path_e[depth] = e
                        depth += 1
                        path_v[depth] = u
                        v = u
                        advanced = True
                        break
                it[v] += 1
            if advanced:
                continue
            level[v] = -1
            if v == s:
                break
            depth -= 1
            v = path_v[depth]
            it[v] += 1

    # Backward pass: nodes that can still reach t, following edges whose
    # residual points toward the BFS front (u->v has capacity iff the reverse
    # of v's stored arc to u does).
    to_sink_np = np.zeros(n, dtype=np.int64)
    cdef cnp.int64_t[::1] to_sink = to_sink_np
    to_sink[t] = 1
    queue[0] = t
    qh = 0
    qt = 1
    while qh < qt:
        v = queue[qh]
        qh += 1
        for e in range(indptr[v], indptr[v + 1]):
            if caps[erev[e]] > 0.0:
                u = heads[e]
                if to_sink[u] == 0:
                    to_sink[u] = 1
                    queue[qt] = u
                    qt += 1

    # The terminating forward BFS explored exactly the residual-reachable set.
    return flow, level_np >= 0, to_sink_np > 0
