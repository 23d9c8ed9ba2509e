"""Normalized adjacency, Krylov bases and the local spectral subspace."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .sampler import Subgraph

RANK_TOL = 1e-10
KRYLOV_ORDERS = ("l", "l+1")
DEFAULT_KRYLOV_ORDER = "l+1"


@dataclass(frozen=True, eq=False)
class LocalSpectra:
    basis: np.ndarray  # N_s x d, orthonormal columns
    walk_steps: int
    requested_dim: int
    # ||V^T V - I||_F of the initial basis and after each refinement step
    orthogonality: list[float] = field(default_factory=list)

    @property
    def effective_dim(self) -> int:
        return self.basis.shape[1]


def seed_indicator(n: int, seed_index: int = 0) -> np.ndarray:
    p0 = np.zeros(n)
    p0[seed_index] = 1.0
    return p0


def normalized_adjacency(sg: Subgraph, binary: bool = False) -> sp.csr_matrix:
    """``D^{-1/2} (A + I) D^{-1/2}`` with ``D`` the degree of ``A``.

    Isolated nodes get degree 1 so the self-loop alone normalizes to 1.
    """
    a = sg.matrix.copy()
    if binary:
        a.data[:] = 1.0
    n = a.shape[0]
    deg = np.asarray(a.sum(axis=1)).ravel()
    deg[deg <= 0] = 1.0
    inv_sqrt = sp.diags(1.0 / np.sqrt(deg))
    out = (inv_sqrt @ (a + sp.identity(n, format="csr")) @ inv_sqrt).tocsr()
    out.sort_indices()
    return out


def orthonormalize(cols: np.ndarray, tol: float = RANK_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Modified Gram-Schmidt with one re-orthogonalization pass.

    Returns ``(Q, R)`` with ``Q`` keeping only numerically independent
    columns: a column is dropped when its residual after projection falls
    below ``tol`` times its original norm. ``R`` is ``rank x ncols`` and
    ``Q @ R`` reproduces ``cols``.
    """
    n, k = cols.shape
    q: list[np.ndarray] = []
    r = np.zeros((k, k))
    for j in range(k):
        v = cols[:, j].astype(np.float64, copy=True)
        norm0 = np.linalg.norm(v)
        if norm0 == 0.0:
            continue
        for _ in range(2):
            for i, qi in enumerate(q):
                c = qi @ v
                r[i, j] += c
                v -= c * qi
        nv = np.linalg.norm(v)
        if nv < tol * norm0:
            continue
        r[len(q), j] = nv
        q.append(v / nv)
    rank = len(q)
    qmat = np.column_stack(q) if q else np.zeros((n, 0))
    return qmat, r[:rank]


def _fix_signs(q: np.ndarray) -> np.ndarray:
    for j in range(q.shape[1]):
        col = q[:, j]
        big = np.flatnonzero(np.abs(col) > 1e-12 * np.abs(col).max())
        if len(big) and col[big[0]] < 0:
            q[:, j] = -col
    return q


def krylov_basis(abar, p0: np.ndarray, dim: int, tol: float = RANK_TOL) -> np.ndarray:
    """Orthonormal basis of ``span(p0, A p0, ..., A^{dim-1} p0)``.

    Built Arnoldi-style from the newest basis vector. Generation stops at
    the first dependent vector since every later power is dependent too.
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    q = [p0 / np.linalg.norm(p0)]
    for _ in range(dim - 1):
        w = abar @ q[-1]
        norm0 = np.linalg.norm(w)
        for _ in range(2):
            for qi in q:
                w = w - (qi @ w) * qi
        nw = np.linalg.norm(w)
        if norm0 == 0.0 or nw < tol * norm0:
            break
        q.append(w / nw)
    return np.column_stack(q)


def local_spectra(
    sg: Subgraph,
    k: int = 3,
    l: int = 3,
    krylov_order: str = DEFAULT_KRYLOV_ORDER,
    binary: bool = False,
) -> LocalSpectra:
    """Local spectral subspace ``V_{k,l}`` around the seed (dense index 0).

    ``krylov_order="l+1"`` starts from ``span(p0, ..., A^l p0)``;
    ``"l"`` starts from ``span(p0, ..., A^{l-1} p0)``. Each of the ``k``
    refinement steps re-orthonormalizes ``A V`` by QR.
    """
    if k < 0 or l < 1:
        raise ValueError("need k >= 0 and l >= 1")
    if krylov_order not in KRYLOV_ORDERS:
        raise ValueError(f"krylov_order must be one of {KRYLOV_ORDERS}")
    abar = normalized_adjacency(sg, binary=binary)
    p0 = seed_indicator(sg.n_nodes)
    dim = l + 1 if krylov_order == "l+1" else l
    v = krylov_basis(abar, p0, dim)
    errs = [orthogonality_error(v)]
    for _ in range(k):
        v, _r = orthonormalize(np.asarray(abar @ v))
        errs.append(orthogonality_error(v))
    return LocalSpectra(_fix_signs(v), k, l, errs)


def orthogonality_error(v: np.ndarray) -> float:
    return float(np.linalg.norm(v.T @ v - np.eye(v.shape[1])))


def write_basis(spectra: LocalSpectra, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in spectra.basis:
            fh.write(" ".join(f"{x:.17g}" for x in row) + "\n")
