"""Reusable s-t max-flow structures over cell graphs.

The cut problems solved here always have the same shape: one node per grid
cell, a fixed set of weighted neighbor pairs (from the perimeter stencil), and
per-cell terminal capacities that change from probe to probe while the
neighbor structure stays put.  ``GraphStructure`` therefore freezes the sorted
CSR layout once and every solve only rewrites the capacity vector.

Two interchangeable kernels run the actual Dinic algorithm: a compiled
extension (``curvemin._core``) and a pure-Python mirror (``_core_py``).  They
share one calling convention and produce identical results; the compiled one
is picked automatically when the build produced it.  Set ``CURVEMIN_PURE=1``
to force the fallback (the benchmark and the cross-check tests do this).
"""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from . import _core_py

_FloatArr = npt.NDArray[np.float64]
_BoolArr = npt.NDArray[np.bool_]

_ENV_FLAG = "CURVEMIN_PURE"

try:
    from . import _core as _core_c  # type: ignore[attr-defined]
except ImportError:  # pragma: no cover - depends on the build environment
    _core_c = None

if os.environ.get(_ENV_FLAG, "") not in ("", "0"):
    _DEFAULT_BACKEND = "pure"
elif _core_c is not None:
    _DEFAULT_BACKEND = "compiled"
else:  # pragma: no cover - depends on the build environment
    _DEFAULT_BACKEND = "pure"
    warnings.warn(
        "compiled max-flow kernel unavailable; using the pure-Python "
        "fallback, which is much slower on large grids",
        RuntimeWarning,
        stacklevel=2,
    )


def backend_name() -> str:
    """Name of the kernel used by default: 'compiled' or 'pure'."""
    return _DEFAULT_BACKEND


def run_max_flow(
    indptr: npt.NDArray[np.int64],
    heads: npt.NDArray[np.int32],
    erev: npt.NDArray[np.int64],
    caps: _FloatArr,
    s: int,
    t: int,
    backend: str | None = None,
) -> tuple[float, _BoolArr, _BoolArr]:
    """Dispatch one Dinic run to the selected kernel.

    ``caps`` is consumed in place (it becomes the residual capacities).
    Returns (flow, from_source, to_sink): ``from_source`` marks the smallest
    minimum cut's source side, and the complement of ``to_sink`` marks the
    largest one.
    """
    chosen = _DEFAULT_BACKEND if backend is None else backend
    if chosen == "compiled":
        if _core_c is None:
            raise RuntimeError("compiled max-flow kernel is not available")
        return _core_c.max_flow(indptr, heads, erev, caps, s, t)
    if chosen == "pure":
        return _core_py.max_flow(indptr, heads, erev, caps, s, t)
    raise ValueError(f"unknown max-flow backend {chosen!r}")


@dataclass(frozen=True)
class GraphStructure:
    """Sorted CSR layout for one cell graph, reusable across capacity fills.

    Nodes ``0..n_cells-1`` are grid cells, ``s = n_cells`` is the source and
    ``t = n_cells + 1`` the sink.  Every cell gets one source arc and one sink
    arc whose capacities are filled per solve; neighbor arcs keep the fixed
    capacities given at construction.  ``src_slot[i]`` / ``snk_slot[i]`` are
    the positions of cell ``i``'s terminal arcs in the sorted edge arrays.
    """

    n_cells: int
    indptr: npt.NDArray[np.int64]
    heads: npt.NDArray[np.int32]
    erev: npt.NDArray[np.int64]
    base_caps: _FloatArr
    src_slot: npt.NDArray[np.int64]
    snk_slot: npt.NDArray[np.int64]

    @property
    def source(self) -> int:
        return self.n_cells

    @property
    def sink(self) -> int:
        return self.n_cells + 1

    @property
    def n_edges(self) -> int:
        return int(self.heads.shape[0])


def build_structure(
    n_cells: int,
    pair_u: npt.NDArray[np.int64],
    pair_v: npt.NDArray[np.int64],
    cap_uv: _FloatArr,
    cap_vu: _FloatArr,
) -> GraphStructure:
    """Assemble the CSR residual layout for cells plus two terminal nodes.

    Each neighbor pair (u, v) contributes the directed arc u->v with capacity
    ``cap_uv`` and v->u with ``cap_vu``; these double as each other's residual
    reverses.  Terminal arcs get zero capacity here and explicit reverse arcs
    so the kernels never special-case them.
    """
    if n_cells <= 0:
        raise ValueError("need at least one cell")
    pair_u = np.ascontiguousarray(pair_u, dtype=np.int64)
    pair_v = np.ascontiguousarray(pair_v, dtype=np.int64)
    n_pairs = pair_u.shape[0]
    if pair_v.shape[0] != n_pairs or cap_uv.shape[0] != n_pairs or cap_vu.shape[0] != n_pairs:
        raise ValueError("pair arrays must share one length")
    if n_pairs and (
        pair_u.min() < 0
        or pair_v.min() < 0
        or pair_u.max() >= n_cells
        or pair_v.max() >= n_cells
    ):
        raise ValueError("pair endpoints out of range")
    if np.any(pair_u == pair_v):
        raise ValueError("self-loops carry no cut capacity")

    n_nodes = n_cells + 2
    s = n_cells
    t = n_cells + 1
    cells = np.arange(n_cells, dtype=np.int64)

    # Edge blocks, in original order: pair forward, pair backward, source
    # arcs, their reverses, sink arcs, their reverses.
    tails = np.concatenate(
        [
            pair_u,
            pair_v,
            np.full(n_cells, s, dtype=np.int64),
            cells,
            cells,
            np.full(n_cells, t, dtype=np.int64),
        ]
    )
    heads0 = np.concatenate(
        [
            pair_v,
            pair_u,
            cells,
            np.full(n_cells, s, dtype=np.int64),
            np.full(n_cells, t, dtype=np.int64),
            cells,
        ]
    )
    caps0 = np.concatenate(
        [
            np.ascontiguousarray(cap_uv, dtype=np.float64),
            np.ascontiguousarray(cap_vu, dtype=np.float64),
            np.zeros(4 * n_cells),
        ]
    )
    off_b = n_pairs
    off_c = 2 * n_pairs
    off_d = off_c + n_cells
    off_e = off_d + n_cells
    off_f = off_e + n_cells
    m = off_f + n_cells
    partner = np.empty(m, dtype=np.int64)
    partner[:off_b] = np.arange(off_b, off_c)
    partner[off_b:off_c] = np.arange(off_b)
    partner[off_c:off_d] = np.arange(off_d, off_e)
    partner[off_d:off_e] = np.arange(off_c, off_d)
    partner[off_e:off_f] = np.arange(off_f, m)
    partner[off_f:] = np.arange(off_e, off_f)

    order = np.argsort(tails, kind="stable")
    pos = np.empty(m, dtype=np.int64)
    pos[order] = np.arange(m, dtype=np.int64)
    counts = np.bincount(tails, minlength=n_nodes)
    indptr = np.zeros(n_nodes + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])

    return GraphStructure(
        n_cells=n_cells,
        indptr=indptr,
        heads=heads0[order].astype(np.int32),
        erev=pos[partner[order]],
        base_caps=np.ascontiguousarray(caps0[order]),
        src_slot=pos[off_c + cells],
        snk_slot=pos[off_e + cells],
    )


def solve_cut(
    structure: GraphStructure,
    source_cap: _FloatArr,
    sink_cap: _FloatArr,
    backend: str | None = None,
) -> tuple[float, _BoolArr, _BoolArr]:
    """Min-cut with the given per-cell terminal capacities.

    Returns (cut_value, in_min, in_max): the cut value plus the source sides
    of the smallest and the largest minimum cut, restricted to cell nodes.
    Every other minimum cut's source side sits between the two.  Cells with
    both terminal capacities positive are reduced first: only the net excess
    enters the graph, and the common part is added back to the cut value.
    """
    n = structure.n_cells
    if source_cap.shape != (n,) or sink_cap.shape != (n,):
        raise ValueError("terminal capacity arrays must have one entry per cell")
    if source_cap.min(initial=0.0) < 0.0 or sink_cap.min(initial=0.0) < 0.0:
        raise ValueError("terminal capacities must be nonnegative")

    both = np.minimum(source_cap, sink_cap)
    caps = structure.base_caps.copy()
    caps[structure.src_slot] = source_cap - both
    caps[structure.snk_slot] = sink_cap - both
    flow, from_source, to_sink = run_max_flow(
        structure.indptr,
        structure.heads,
        structure.erev,
        caps,
        structure.source,
        structure.sink,
        backend=backend,
    )
    return float(flow + both.sum()), from_source[:n], ~to_sink[:n]
