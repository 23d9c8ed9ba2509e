import numpy as np
import pytest
import scipy.sparse as sp

from leas.graph import from_edges
from leas.sampler import Subgraph


def make_subgraph(edges, n=None, ids=None, seed_index=0):
    """Subgraph over dense indices ``0..n-1`` with index 0 as seed."""
    if n is None:
        n = 1 + max((max(a, b) for a, b, *_ in edges), default=0)
    rows, cols, vals = [], [], []
    for e in edges:
        a, b = e[0], e[1]
        w = e[2] if len(e) > 2 else 1.0
        rows += [a, b]
        cols += [b, a]
        vals += [w, w]
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    mat.sort_indices()
    if ids is None:
        ids = np.arange(1, n + 1, dtype=np.uint64)
    deg = np.diff(mat.indptr)
    return Subgraph(int(ids[seed_index]), np.asarray(ids, dtype=np.uint64), mat, deg)


def random_edges(rng, n, p, weights=False):
    out = []
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < p:
                out.append((i, j, float(rng.integers(1, 5)) if weights else 1.0))
    return out


def connected_random_edges(rng, n, p, weights=False):
    while True:
        edges = random_edges(rng, n, p, weights)
        seen = {0}
        adj = {i: set() for i in range(n)}
        for a, b, _ in edges:
            adj[a].add(b)
            adj[b].add(a)
        stack = [0]
        while stack:
            v = stack.pop()
            for u in adj[v] - seen:
                seen.add(u)
                stack.append(u)
        if len(seen) == n:
            return edges


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def triangle_graph():
    return from_edges([(1, 2, 1), (1, 3, 1), (2, 3, 1)])


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.RESULTS, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
