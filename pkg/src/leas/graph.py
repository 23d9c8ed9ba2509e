"""Weighted co-engagement graph over actors.

The graph is stored as a symmetric CSR matrix over dense indices that follow
ascending node id, so a row's column order is also neighbor-id order.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping

import numpy as np
import scipy.sparse as sp

from .ingest import EngagementBipartite

log = logging.getLogger(__name__)

DEFAULT_HOT_TARGET_CAP = 10_000


@dataclass(frozen=True, eq=False)
class EngagementGraph:
    node_ids: np.ndarray  # uint64, strictly ascending
    matrix: sp.csr_matrix  # symmetric, zero diagonal, positive weights
    owner_index: Mapping[int, int] = field(default_factory=dict)
    pages_per_owner: Mapping[int, int] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(
            self, "index", {int(v): i for i, v in enumerate(self.node_ids)}
        )
        object.__setattr__(self, "_degrees", np.diff(self.matrix.indptr))

    @property
    def nodes(self) -> set[int]:
        return set(self.index)

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)

    @property
    def n_edges(self) -> int:
        return self.matrix.nnz // 2

    def __contains__(self, node: int) -> bool:
        return node in self.index

    def degree(self, node: int) -> int:
        return int(self._degrees[self.index[node]])

    @property
    def degrees(self) -> np.ndarray:
        return self._degrees

    def adjacency(self, node: int) -> list[tuple[int, float]]:
        i = self.index[node]
        lo, hi = self.matrix.indptr[i], self.matrix.indptr[i + 1]
        return [
            (int(self.node_ids[j]), float(w))
            for j, w in zip(self.matrix.indices[lo:hi], self.matrix.data[lo:hi])
        ]

    def weight(self, a: int, b: int) -> float:
        return float(self.matrix[self.index[a], self.index[b]])

    def owner(self, node: int) -> int:
        return self.owner_index.get(node, node)

    def edges(self) -> Iterator[tuple[int, int, float]]:
        """Yield ``(a, b, w)`` with ``a < b`` in ascending order."""
        upper = sp.triu(self.matrix, k=1, format="csr")
        upper.sort_indices()
        ids = self.node_ids
        for i in range(upper.shape[0]):
            lo, hi = upper.indptr[i], upper.indptr[i + 1]
            for j, w in zip(upper.indices[lo:hi], upper.data[lo:hi]):
                yield int(ids[i]), int(ids[j]), float(w)

    def same_structure(self, other: "EngagementGraph") -> bool:
        return (
            np.array_equal(self.node_ids, other.node_ids)
            and (self.matrix != other.matrix).nnz == 0
        )


def from_edges(
    edges: Iterable[tuple[int, int, float]],
    nodes: Iterable[int] = (),
    owner_index: Mapping[int, int] | None = None,
) -> EngagementGraph:
    """Assemble a graph from undirected ``(a, b, w)`` triples.

    Repeated pairs are summed; self-loops and nonpositive weights are rejected.
    """
    a_list, b_list, w_list = [], [], []
    for a, b, w in edges:
        if a == b:
            raise ValueError(f"self-loop on node {a}")
        if not w > 0:
            raise ValueError(f"edge ({a}, {b}) has nonpositive weight {w}")
        a_list.append(int(a))
        b_list.append(int(b))
        w_list.append(float(w))
    ids = np.unique(
        np.array(a_list + b_list + [int(v) for v in nodes], dtype=np.uint64)
    )
    pos = {int(v): i for i, v in enumerate(ids)}
    rows = np.fromiter((pos[a] for a in a_list), dtype=np.int64, count=len(a_list))
    cols = np.fromiter((pos[b] for b in b_list), dtype=np.int64, count=len(b_list))
    return _assemble(ids, rows, cols, np.asarray(w_list, dtype=np.float64), owner_index)


def _assemble(ids, rows, cols, weights, owner_index=None) -> EngagementGraph:
    n = len(ids)
    lo, hi = np.minimum(rows, cols), np.maximum(rows, cols)
    upper = sp.coo_matrix((weights, (lo, hi)), shape=(n, n)).tocsr()
    upper.sum_duplicates()
    mat = (upper + upper.T).tocsr()
    mat.sort_indices()
    owners = dict(owner_index or {})
    return EngagementGraph(ids, mat, owners, _count_pages(owners))


def _count_pages(owner_index: Mapping[int, int]) -> dict[int, int]:
    return dict(sorted(Counter(owner_index.values()).items()))


def build_graph(
    b: EngagementBipartite,
    coherence_delta_t: float | None = None,
    hot_target_cap: int = DEFAULT_HOT_TARGET_CAP,
) -> EngagementGraph:
    """Project the bipartite onto actors.

    The weight of a pair is the number of distinct targets both engaged. With
    ``coherence_delta_t`` set, a shared target only counts when all of the
    pair's timestamps on it fit in a ``2 * delta_t`` span. Targets engaged by
    more than ``hot_target_cap`` distinct actors are skipped.
    """
    actor_ids = np.array(sorted(b.actors), dtype=np.uint64)
    pos = {int(v): i for i, v in enumerate(actor_ids)}
    n = len(actor_ids)
    codes: list[np.ndarray] = []
    skipped = 0
    for target, acts in b.by_target.items():
        k = len(acts)
        if k < 2:
            continue
        if k > hot_target_cap:
            skipped += 1
            log.info("skipping hot target %d with %d actors", target, k)
            continue
        idx = np.fromiter((pos[a] for a in acts), dtype=np.int64, count=k)
        ii, jj = np.triu_indices(k, 1)
        if coherence_delta_t is not None:
            tmin = np.fromiter((ts[0] for ts in acts.values()), dtype=np.float64, count=k)
            tmax = np.fromiter((ts[-1] for ts in acts.values()), dtype=np.float64, count=k)
            span = np.maximum(tmax[ii], tmax[jj]) - np.minimum(tmin[ii], tmin[jj])
            keep = span <= 2 * coherence_delta_t
            ii, jj = ii[keep], jj[keep]
        # actors per target are sorted by id, so idx[ii] < idx[jj]
        codes.append(idx[ii] * n + idx[jj])
    if skipped:
        log.warning("skipped %d hot targets above cap %d", skipped, hot_target_cap)
    if codes:
        uniq, counts = np.unique(np.concatenate(codes), return_counts=True)
    else:
        uniq = counts = np.zeros(0, dtype=np.int64)
    rows, cols = np.divmod(uniq, n) if n else (uniq, uniq)
    owners = {a: o for a, o in b.owners.items() if a in pos}
    return _assemble(actor_ids, rows, cols, counts.astype(np.float64), owners)


def apply_owner_penalty(g: EngagementGraph) -> EngagementGraph:
    """Add ``|P(owner)|`` to every existing edge whose endpoints share an owner."""
    coo = sp.triu(g.matrix, k=1, format="coo")
    ids = g.node_ids
    missing = 0
    owner_of = np.empty(len(ids), dtype=object)
    for i, v in enumerate(ids):
        v = int(v)
        if v in g.owner_index:
            owner_of[i] = g.owner_index[v]
        else:
            owner_of[i] = v
            missing += 1
    if missing:
        log.debug("%d nodes lack an owner entry; treated as self-owned", missing)
    bonus = np.zeros(coo.nnz)
    for e, (i, j) in enumerate(zip(coo.row, coo.col)):
        oi = owner_of[i]
        if oi == owner_of[j]:
            bonus[e] = g.pages_per_owner.get(oi, 1)
    upper = sp.coo_matrix((coo.data + bonus, (coo.row, coo.col)), shape=g.matrix.shape)
    mat = (upper + upper.T).tocsr()
    mat.sort_indices()
    return EngagementGraph(ids, mat, g.owner_index, g.pages_per_owner)


def degree_histogram(
    g: EngagementGraph, node_subset: Iterable[int] | None = None
) -> dict[int, int]:
    if node_subset is None:
        degs = g.degrees
    else:
        idx = []
        for v in node_subset:
            if v not in g.index:
                raise KeyError(f"node {v} not in graph")
            idx.append(g.index[v])
        degs = g.degrees[np.asarray(idx, dtype=np.int64)]
    return dict(sorted(Counter(int(d) for d in degs).items()))


def _fmt_weight(w: float) -> str:
    return str(int(w)) if float(w).is_integer() else repr(float(w))


def format_graph_tsv(g: EngagementGraph) -> str:
    return "".join(f"{a}\t{b}\t{_fmt_weight(w)}\n" for a, b, w in g.edges())


def format_owners_tsv(owner_index: Mapping[int, int]) -> str:
    return "".join(f"{p}\t{o}\n" for p, o in sorted(owner_index.items()))


def write_graph_tsv(g: EngagementGraph, path: str | Path) -> None:
    Path(path).write_text(format_graph_tsv(g), encoding="utf-8")


def write_owners_tsv(owner_index: Mapping[int, int], path: str | Path) -> None:
    Path(path).write_text(format_owners_tsv(owner_index), encoding="utf-8")


def read_owners_tsv(path: str | Path) -> dict[int, int]:
    out: dict[int, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected page<TAB>owner")
            out[int(parts[0])] = int(parts[1])
    return out


def read_graph_tsv(
    path: str | Path, owners_path: str | Path | None = None
) -> EngagementGraph:
    rows: list[tuple[int, int, float]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected node_a<TAB>node_b<TAB>weight")
            a, b, w = int(parts[0]), int(parts[1]), float(parts[2])
            if a >= b:
                raise ValueError(f"{path}:{lineno}: node_a must be < node_b")
            rows.append((a, b, w))
    owners = read_owners_tsv(owners_path) if owners_path else {}
    return from_edges(rows, owner_index=owners)
