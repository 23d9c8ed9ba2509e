"""Degree-thresholded BFS sampling of a seed's neighborhood."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .graph import EngagementGraph, _fmt_weight

DEFAULT_D_MAX = 500
DEFAULT_CAP_N = 3000


@dataclass(frozen=True, eq=False)
class Subgraph:
    """Sampled neighborhood; dense index 0 is the seed.

    ``node_ids[i]`` is the id at dense index ``i``; ``matrix`` is the
    symmetric weighted adjacency over dense indices and ``parent_degree``
    the unweighted degree of each node in the full graph.
    """

    seed: int
    node_ids: np.ndarray
    matrix: sp.csr_matrix
    parent_degree: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "index", {int(v): i for i, v in enumerate(self.node_ids)}
        )

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)

    @property
    def n_edges(self) -> int:
        return self.matrix.nnz // 2

    def __contains__(self, node: int) -> bool:
        return node in self.index

    def weight(self, a: int, b: int) -> float:
        return float(self.matrix[self.index[a], self.index[b]])


def sample_subgraph(
    g: EngagementGraph,
    seed: int,
    d_max: int = DEFAULT_D_MAX,
    cap_n: int = DEFAULT_CAP_N,
    m: float = 1.0,
) -> Subgraph:
    """BFS from ``seed`` over edges of weight >= ``m``.

    Nodes whose full-graph degree exceeds ``d_max`` are never admitted (the
    seed itself is exempt). Each BFS layer is admitted in ascending node id
    until ``cap_n`` nodes are held, so truncation keeps the smallest ids.
    """
    if seed not in g.index:
        raise KeyError(f"seed {seed} not in graph")
    if d_max < 1 or cap_n < 1 or m < 0:
        raise ValueError("need d_max >= 1, cap_n >= 1, m >= 0")
    mat = g.matrix
    indptr, indices, data = mat.indptr, mat.indices, mat.data
    degrees = g.degrees
    s = g.index[seed]
    visited = np.zeros(g.n_nodes, dtype=bool)
    visited[s] = True
    order = [np.array([s], dtype=np.int64)]
    count = 1
    layer = order[0]
    while count < cap_n and len(layer):
        parts = []
        for i in layer:
            lo, hi = indptr[i], indptr[i + 1]
            nbr = indices[lo:hi]
            parts.append(nbr[data[lo:hi] >= m])
        if not parts:
            break
        cand = np.unique(np.concatenate(parts))
        cand = cand[~visited[cand]]
        visited[cand] = True  # rejected high-degree nodes stay out for good
        cand = cand[degrees[cand] <= d_max]
        cand = cand[: cap_n - count]
        if not len(cand):
            break
        order.append(cand)
        count += len(cand)
        layer = cand
    dense = np.concatenate(order)
    sub = mat[dense][:, dense].tocsr()
    if m > 0:
        sub.data[sub.data < m] = 0
        sub.eliminate_zeros()
    sub.sort_indices()
    return Subgraph(
        seed=seed,
        node_ids=g.node_ids[dense].copy(),
        matrix=sub,
        parent_degree=degrees[dense].copy(),
    )


def dump_subgraph(sg: Subgraph, edges_path: str | Path, nodemap_path: str | Path) -> None:
    """Write the sample as a TSV edge list plus a ``dense_index<TAB>node_id`` map."""
    ids = sg.node_ids
    lower = sp.tril(sg.matrix, k=-1).tocoo()
    rows = sorted(
        ((min(int(ids[i]), int(ids[j])), max(int(ids[i]), int(ids[j]))), w)
        for i, j, w in zip(lower.row, lower.col, lower.data)
    )
    with open(edges_path, "w", encoding="utf-8") as fh:
        for (a, b), w in rows:
            fh.write(f"{a}\t{b}\t{_fmt_weight(w)}\n")
    with open(nodemap_path, "w", encoding="utf-8") as fh:
        for i, v in enumerate(ids):
            fh.write(f"{i}\t{int(v)}\n")
