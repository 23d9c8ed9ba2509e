"""Dense two-phase simplex for small standard-form programs.

Solves ``min c^T x  s.t.  A x = b, x >= 0`` with Bland's rule for both the
entering and the leaving variable, so the pivot sequence is deterministic
and cannot cycle. The basis inverse is refactored from scratch every pivot;
this targets programs with a handful of rows and many columns.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PIVOT_TOL = 1e-11
FEAS_TOL = 1e-9


class LPError(Exception):
    pass


class Infeasible(LPError):
    pass


class Unbounded(LPError):
    pass


@dataclass
class SimplexResult:
    x: np.ndarray
    basis: np.ndarray
    objective: float
    iterations: int


def _run_phase(a, b, c, basis, max_iter, scale):
    m, n = a.shape
    iters = 0
    while True:
        bmat = a[:, basis]
        binv = np.linalg.inv(bmat)
        xb = binv @ b
        pi = c[basis] @ binv
        reduced = c - pi @ a
        reduced[basis] = 0.0
        cand = np.flatnonzero(reduced < -PIVOT_TOL * scale)
        if not len(cand):
            return basis, xb, iters
        if iters >= max_iter:
            raise LPError(f"simplex exceeded {max_iter} pivots")
        q = cand[0]
        u = binv @ a[:, q]
        pos = np.flatnonzero(u > PIVOT_TOL)
        if not len(pos):
            raise Unbounded(f"column {q} gives an unbounded ray")
        ratios = np.maximum(xb[pos], 0.0) / u[pos]
        best = ratios.min()
        ties = pos[ratios <= best + 1e-14 * max(1.0, best)]
        leave = ties[np.argmin(basis[ties])]
        basis = basis.copy()
        basis[leave] = q
        iters += 1


def simplex(a, b, c, max_iter: int | None = None) -> SimplexResult:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64).copy()
    c = np.asarray(c, dtype=np.float64)
    m, n = a.shape
    a = a.copy()
    neg = b < 0
    a[neg] *= -1
    b[neg] *= -1
    max_iter = max_iter or 50 * (m + n)

    # phase 1: artificial identity block, minimize their sum
    a1 = np.hstack([a, np.eye(m)])
    c1 = np.concatenate([np.zeros(n), np.ones(m)])
    basis = np.arange(n, n + m)
    scale1 = max(1.0, np.abs(a1).max())
    basis, xb, it1 = _run_phase(a1, b, c1, basis, max_iter, scale1)
    infeas = float(c1[basis] @ xb)
    if infeas > FEAS_TOL * max(1.0, np.abs(b).max()):
        raise Infeasible(f"phase 1 residual {infeas:.3e}")

    # drive zero-level artificials out of the basis
    for row in range(m):
        if basis[row] < n:
            continue
        binv = np.linalg.inv(a1[:, basis])
        tab = binv[row] @ a
        cols = [j for j in np.flatnonzero(np.abs(tab) > PIVOT_TOL) if j not in basis]
        if not cols:
            raise LPError("redundant equality row")
        basis = basis.copy()
        basis[row] = cols[0]
        it1 += 1

    scale2 = max(1.0, np.abs(c).max())
    basis, xb, it2 = _run_phase(a, b, c, basis, max_iter, scale2)
    x = np.zeros(n)
    x[basis] = xb
    return SimplexResult(x, basis, float(c @ x), it1 + it2)
