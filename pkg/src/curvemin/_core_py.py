"""Dinic max-flow on a CSR residual graph (pure-Python fallback).

This mirrors the compiled kernel in ``_core.pyx`` operation for operation so
both backends return bit-identical flows and reachable sets.  It exists so the
package works without a C toolchain; it is markedly slower and is only meant
for small graphs, tests, and the backend benchmark.
"""

from __future__ import annotations

import numpy as np
import numpy.typing as npt

_INF = float(np.finfo(np.float64).max)


def max_flow(
    indptr: npt.NDArray[np.int64],
    heads: npt.NDArray[np.int32],
    erev: npt.NDArray[np.int64],
    caps: npt.NDArray[np.float64],
    s: int,
    t: int,
) -> tuple[float, npt.NDArray[np.bool_], npt.NDArray[np.bool_]]:
    """Run Dinic to completion.  ``caps`` is mutated into the residual graph.

    Returns (flow_value, from_source, to_sink): the flow value, the bool
    array of nodes reachable from ``s`` in the final residual graph (the
    smallest minimum cut's source side), and the bool array of nodes that can
    still reach ``t`` (whose complement is the largest minimum cut's source
    side).
    """
    n = indptr.shape[0] - 1
    if s < 0 or s >= n or t < 0 or t >= n or s == t:
        raise ValueError("bad terminal nodes")

    indptr_l = indptr.tolist()
    heads_l = heads.tolist()
    erev_l = erev.tolist()
    caps_l = caps.tolist()

    level = [-1] * n
    flow = 0.0

    while True:
        for i in range(n):
            level[i] = -1
        level[s] = 0
        queue = [s]
        qh = 0
        while qh < len(queue):
            v = queue[qh]
            qh += 1
            lv = level[v] + 1
            for e in range(indptr_l[v], indptr_l[v + 1]):
                if caps_l[e] > 0.0:
                    u = heads_l[e]
                    if level[u] < 0:
                        level[u] = lv
                        queue.append(u)
        if level[t] < 0:
            break

        it = indptr_l[:-1]
        path_e: list[int] = []
        path_v = [s]
        v = s
        while True:
            if v == t:
                bn = _INF
                d = 0
                for i, e in enumerate(path_e):
                    if caps_l[e] < bn:
                        bn = caps_l[e]
                        d = i
                for e in path_e:
                    caps_l[e] -= bn
                    caps_l[erev_l[e]] += bn
                flow += bn
                del path_e[d:]
                del path_v[d + 1 :]
                v = path_v[d]
                continue
            advanced = False
            while it[v] < indptr_l[v + 1]:
                e = it[v]
                if caps_l[e] > 0.0:
                    u = heads_l[e]
                    if level[u] == level[v] + 1:
                        path_e.append(e)
                        path_v.append(u)
                        v = u
                        advanced = True
                        break
                it[v] += 1
            if advanced:
                continue
            level[v] = -1
            if v == s:
                break
            path_e.pop()
            path_v.pop()
            v = path_v[-1]
            it[v] += 1

    to_sink = [False] * n
    to_sink[t] = True
    queue = [t]
    qh = 0
    while qh < len(queue):
        v = queue[qh]
        qh += 1
        for e in range(indptr_l[v], indptr_l[v + 1]):
            if caps_l[erev_l[e]] > 0.0:
                u = heads_l[e]
                if not to_sink[u]:
                    to_sink[u] = True
                    queue.append(u)

    caps[:] = caps_l
    from_source = np.asarray(level, dtype=np.int64) >= 0
    return flow, from_source, np.asarray(to_sink, dtype=np.bool_)
