"""Sparse diffusion over the local spectra, sweep-cut rounding and T-ABC checks."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np
import scipy.sparse as sp

from .ingest import EngagementBipartite, temporal_coherence
from .sampler import Subgraph
from .simplex import LPError, simplex
from .spectral import LocalSpectra

log = logging.getLogger(__name__)

COND_LIMIT = 1e12
DENSITY_TOL = 1e-9


class DiffusionError(Exception):
    """Per-seed failure of the diffusion program."""


@dataclass(frozen=True, eq=False)
class DiffusionVector:
    values: np.ndarray
    coefficients: np.ndarray
    objective: float
    iterations: int = 0


@dataclass(frozen=True)
class AccompliceCluster:
    seed: int
    members: tuple[int, ...]
    conductance: float
    internal_density: float
    edge_count: int
    tabc_params: tuple | None = None
    temporal_coherent: bool | None = None
    tabc: bool | None = None
    warnings: tuple[str, ...] = ()

    @property
    def size(self) -> int:
        return len(self.members)

    def to_record(self) -> dict:
        return {
            "seed": self.seed,
            "members": list(self.members),
            "conductance": self.conductance,
            "density": self.internal_density,
            "tabc": bool(self.tabc),
            "warnings": list(self.warnings),
        }


def rayleigh_quotient(h, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    return float(x @ (h @ x)) / float(x @ x)


def generalized_rayleigh(h, d, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    return float(x @ (h @ x)) / float(x @ (d @ x))


def solve_l1(spectra: LocalSpectra, seed_index: int = 0) -> DiffusionVector:
    """Minimize ``sum(y)`` over ``y = V z`` with ``y >= 0`` and ``y[seed] >= 1``.

    The program has ``d`` free variables and one inequality per node. We run
    the simplex on its dual ``max l_s  s.t.  V^T l = V^T 1, l >= 0``, which
    has only ``d`` equality rows, and read ``z`` off the optimal basis: the
    basic dual columns mark the tight primal constraints.
    """
    v = spectra.basis
    n, d = v.shape
    h = np.zeros(n)
    h[seed_index] = 1.0
    if not np.any(v[seed_index]):
        raise DiffusionError(f"seed row of the basis is zero; program infeasible")
    c = v.sum(axis=0)
    try:
        res = simplex(v.T, c, -h)
    except LPError as exc:
        raise DiffusionError(f"diffusion program failed: {exc}") from exc
    vb = v[res.basis]
    cond = np.linalg.cond(vb)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise DiffusionError(f"degenerate optimal basis, condition number {cond:.3e}")
    z = np.linalg.solve(vb, h[res.basis])
    y = v @ z
    return DiffusionVector(y, z, float(y.sum()), res.iterations)


def _weights(sg: Subgraph, binary: bool) -> sp.csr_matrix:
    a = sg.matrix
    if binary:
        a = a.copy()
        a.data[:] = 1.0
    return a


def conductance(sg: Subgraph, member_indicator, binary: bool = False) -> float:
    """``x^T L x / x^T D x``: cut weight leaving the set over its volume."""
    x = np.asarray(member_indicator, dtype=np.float64)
    k = int(np.count_nonzero(x))
    if k == 0 or k == len(x):
        raise ValueError("conductance needs a proper nonempty subset")
    a = _weights(sg, binary)
    deg = np.asarray(a.sum(axis=1)).ravel()
    lap = sp.diags(deg) - a
    return generalized_rayleigh(lap, sp.diags(deg), x)


def _exact_argmin(cut, vol, admissible) -> int:
    idx = np.flatnonzero(admissible)
    phi = cut[idx] / vol[idx]
    low = phi.min()
    near = idx[phi <= low + abs(low) * 1e-12]
    best = near[0]
    best_val = Fraction(cut[best]) / Fraction(vol[best])
    for j in near[1:]:
        val = Fraction(cut[j]) / Fraction(vol[j])
        if val < best_val:
            best, best_val = j, val
    return int(best)


def sweep_profile(sg: Subgraph, y, binary: bool = False):
    """Ranking by decreasing ``y`` (ties by node id) and prefix cut/volume/edges."""
    y = np.asarray(y, dtype=np.float64)
    ids = sg.node_ids
    order = np.lexsort((ids, -y))
    a = _weights(sg, binary)[order][:, order].tocsr()
    deg = np.asarray(a.sum(axis=1)).ravel()
    inner = np.asarray(sp.tril(a, k=-1).sum(axis=1)).ravel()
    vol = np.cumsum(deg)
    cut = vol - 2.0 * np.cumsum(inner)
    binner = np.diff(sp.tril(a, k=-1, format="csr").indptr)
    edges = np.cumsum(binner)
    return order, cut, vol, edges


def sweep_cut(
    sg: Subgraph, y: DiffusionVector | np.ndarray, n_min: int, binary: bool = False
) -> AccompliceCluster:
    """Round ``y`` to the minimum-conductance prefix of its ranking.

    Admissible prefixes hold between ``n_min`` and ``N_s - 1`` nodes and at
    most half of the sample's volume. Equal conductances resolve to the
    smaller prefix. A prefix that misses the seed is extended to include it.
    """
    values = y.values if isinstance(y, DiffusionVector) else np.asarray(y)
    n = sg.n_nodes
    warnings: list[str] = []
    order, cut, vol, edges = sweep_profile(sg, values, binary)
    sizes = np.arange(1, n + 1)
    if n < n_min + 1:
        size = n
        warnings.append(f"low-confidence: sample of {n} nodes below n_min+1={n_min + 1}")
    else:
        ok = (sizes >= n_min) & (sizes <= n - 1) & (vol > 0)
        capped = ok & (2.0 * vol <= vol[-1])
        if capped.any():
            ok = capped
        elif ok.any():
            warnings.append("volume cap relaxed: no admissible prefix within half volume")
        if not ok.any():
            size = n
            warnings.append("low-confidence: no prefix with positive volume")
        else:
            size = _exact_argmin(cut, vol, ok) + 1
    rank = int(np.flatnonzero(order == 0)[0])
    if rank >= size:
        warnings.append(f"seed forced: minimizing prefix of {size} extended to {rank + 1}")
        size = rank + 1
    members = tuple(sorted(int(v) for v in sg.node_ids[order[:size]]))
    e = int(edges[size - 1])
    dens = 2.0 * e / (size * (size - 1)) if size > 1 else 0.0
    phi = float(cut[size - 1] / vol[size - 1]) if vol[size - 1] > 0 else 0.0
    for w in warnings:
        log.info("seed %d: %s", sg.seed, w)
    return AccompliceCluster(
        seed=sg.seed,
        members=members,
        conductance=phi,
        internal_density=dens,
        edge_count=e,
        warnings=tuple(warnings),
    )


@dataclass
class TabcReport:
    verdict: bool
    structural: bool
    conditions: dict[str, bool]
    achieved_density: float
    quadratic_density: float
    identity_residual: float
    verified_pairs: int = 0
    incoherent_pairs: int = 0
    unverifiable_pairs: int = 0
    failures: list[str] = field(default_factory=list)

    def to_record(self) -> dict:
        return {
            "verdict": bool(self.verdict),
            "structural": bool(self.structural),
            "conditions": {k: bool(v) for k, v in self.conditions.items()},
            "achieved_density": float(self.achieved_density),
            "quadratic_density": float(self.quadratic_density),
            "identity_residual": float(self.identity_residual),
            "verified_pairs": self.verified_pairs,
            "incoherent_pairs": self.incoherent_pairs,
            "unverifiable_pairs": self.unverifiable_pairs,
            "failures": list(self.failures),
        }


def quadratic_density(sg: Subgraph, members) -> float:
    """Internal density as ``x^T A x / x^T (J - I) x`` on the binarized sample."""
    x = np.zeros(sg.n_nodes)
    x[[sg.index[v] for v in members]] = 1.0
    a = _weights(sg, True)
    num = float(x @ (a @ x))
    k = x.sum()
    den = k * k - k  # x^T J x - x^T x
    return num / den if den else 0.0


def validate_tabc(
    cluster: AccompliceCluster,
    sg: Subgraph,
    b: EngagementBipartite | None,
    n: int,
    m: float,
    rho: float,
    delta_t: float | None,
) -> TabcReport:
    """Check a cluster against the ``[n, m, rho, delta_t]`` T-ABC conditions.

    The ``edge_count`` condition uses the parameter ``n`` literally and the
    ``density`` condition compares the achieved density with ``rho``. Pairs
    sharing no recorded target in ``b`` are unverifiable and left out of the
    temporal conjunction.
    """
    members = cluster.members
    missing = [v for v in members if v not in sg.index]
    if missing:
        raise ValueError(f"cluster members {missing[:5]} not in subgraph")
    idx = np.array([sg.index[v] for v in members], dtype=np.int64)
    sub = sp.triu(sg.matrix[idx][:, idx], k=1).tocoo()
    e = sub.nnz
    size = len(members)
    achieved = 2.0 * e / (size * (size - 1)) if size > 1 else 0.0
    quad = quadratic_density(sg, members)
    residual = abs(quad - achieved)
    conditions = {
        "seed_member": cluster.seed in members,
        "min_size": size >= n,
        "edge_count": e >= rho * n * (n - 1) / 2,
        "edge_weight": bool(np.all(sub.data >= m)),
        "density": achieved >= rho,
    }
    structural = all(conditions.values())
    report = TabcReport(
        verdict=False,
        structural=structural,
        conditions=conditions,
        achieved_density=achieved,
        quadratic_density=quad,
        identity_residual=residual,
    )
    if delta_t is not None:
        for i, j in zip(sub.row, sub.col):
            va, vb = members[i], members[j]
            shared = b.targets_of(va) & b.targets_of(vb) if b is not None else set()
            if not shared:
                report.unverifiable_pairs += 1
                continue
            report.verified_pairs += 1
            for q in sorted(shared):
                ts = b.timestamps(va, q) + b.timestamps(vb, q)
                if not temporal_coherence(ts, delta_t):
                    report.incoherent_pairs += 1
                    break
    temporal = report.incoherent_pairs == 0
    conditions["temporal"] = temporal
    conditions["density_identity"] = bool(residual <= DENSITY_TOL)
    report.verdict = bool(structural and temporal)
    report.failures = [k for k, ok in conditions.items() if not ok]
    return report


def annotate(
    cluster: AccompliceCluster, report: TabcReport, n, m, rho, delta_t
) -> AccompliceCluster:
    return replace(
        cluster,
        tabc_params=(n, m, rho, delta_t),
        temporal_coherent=report.conditions["temporal"],
        tabc=report.verdict,
    )
