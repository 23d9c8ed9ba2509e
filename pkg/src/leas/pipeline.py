"""Multi-seed expansion, tier classification and cluster-quality metrics."""

from __future__ import annotations

import logging
import multiprocessing as mp
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from fractions import Fraction
from pathlib import Path
from typing import Iterable

import numpy as np

from .diffusion import (
    AccompliceCluster,
    DiffusionError,
    annotate,
    solve_l1,
    sweep_cut,
    validate_tabc,
)
from .graph import DEFAULT_HOT_TARGET_CAP, EngagementGraph
from .ingest import EngagementBipartite
from .sampler import DEFAULT_CAP_N, DEFAULT_D_MAX, sample_subgraph
from .spectral import DEFAULT_KRYLOV_ORDER, KRYLOV_ORDERS, local_spectra

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunConfig:
    k: int = 3
    l: int = 3
    n_min: int = 10
    cap_n: int = DEFAULT_CAP_N
    d_max: int = DEFAULT_D_MAX
    m: float = 1.0
    delta_t: float = 3600.0
    rho_min: float = 0.5
    worker_count: int = 1
    hot_target_cap: int = DEFAULT_HOT_TARGET_CAP
    krylov_order: str = DEFAULT_KRYLOV_ORDER
    binary_adjacency: bool = False
    rng_seed: int = 0

    def __post_init__(self):
        if self.k < 0 or self.l < 1:
            raise ValueError("need k >= 0 and l >= 1")
        for name in ("n_min", "cap_n", "d_max", "worker_count", "hot_target_cap"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.m < 0 or self.delta_t < 0 or not 0 <= self.rho_min <= 1:
            raise ValueError("need m >= 0, delta_t >= 0 and rho_min in [0, 1]")
        if self.krylov_order not in KRYLOV_ORDERS:
            raise ValueError(f"krylov_order must be one of {KRYLOV_ORDERS}")

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in asdict(self).items())

    @classmethod
    def from_mapping(cls, values: dict) -> "RunConfig":
        types = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            if key not in types:
                raise ValueError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(types[key], raw)
        return cls(**kwargs)


def _coerce(typ: str, raw):
    if not isinstance(raw, str):
        return raw
    if typ == "bool":
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if typ == "int":
        return int(raw)
    if typ == "float":
        return float(raw)
    return raw.strip()


def parse_config_text(text: str) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        out[key] = val
    return out


def load_config(path: str | Path, **overrides) -> RunConfig:
    values = parse_config_text(Path(path).read_text(encoding="utf-8"))
    values.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig.from_mapping(values)


# --- metrics ---------------------------------------------------------------


def _member_index(view, members) -> np.ndarray:
    idx = []
    for v in members:
        if v not in view.index:
            raise KeyError(f"node {v} not in graph")
        idx.append(view.index[v])
    return np.asarray(idx, dtype=np.int64)


def internal_density(members: Iterable[int], view) -> Fraction:
    """``2|E'| / (|V'|(|V'|-1))`` over unweighted induced edges."""
    members = sorted(set(members))
    k = len(members)
    if k < 2:
        raise ValueError("internal density needs at least two members")
    idx = _member_index(view, members)
    sub = view.matrix[idx][:, idx]
    edges = sub.nnz // 2
    return Fraction(2 * edges, k * (k - 1))


def flake_odf(members: Iterable[int], g: EngagementGraph) -> Fraction:
    """Fraction of members with fewer internal edges than half their degree."""
    members = sorted(set(members))
    if not members:
        raise ValueError("flake_odf needs a nonempty member set")
    idx = _member_index(g, members)
    internal = np.diff(g.matrix[idx][:, idx].tocsr().indptr)
    deg = g.degrees[idx]
    failing = int(np.count_nonzero(2 * internal < deg))
    return Fraction(failing, len(members))


# --- tiers -----------------------------------------------------------------


@dataclass
class TierReport:
    detection_count: dict[int, int] = field(default_factory=dict)
    tier1: list[int] = field(default_factory=list)
    tier2: list[int] = field(default_factory=list)
    histogram: dict[int, int] = field(default_factory=dict)
    review: list[int] = field(default_factory=list)
    review_density: float | None = None

    @property
    def tier1_fraction(self) -> float:
        total = len(self.tier1) + len(self.tier2)
        return len(self.tier1) / total if total else 0.0

    def to_record(self) -> dict:
        return {
            "accounts": len(self.detection_count),
            "tier1_count": len(self.tier1),
            "tier2_count": len(self.tier2),
            "tier1_fraction": self.tier1_fraction,
            "histogram": {str(k): v for k, v in self.histogram.items()},
            "tier1": self.tier1,
            "tier2": self.tier2,
            "detection_count": {str(k): v for k, v in self.detection_count.items()},
            "review_density": self.review_density,
            "tier2_review": self.review,
        }


def tier_classify(
    clusters: Iterable[AccompliceCluster],
    seeds: Iterable[int],
    review_density: float | None = None,
) -> TierReport:
    """Count, per non-seed account, the distinct seeds whose cluster holds it.

    With ``review_density`` set, Tier II accounts belonging to a cluster
    denser than it are listed under ``review``.
    """
    seeds = set(seeds)
    clusters = list(clusters)
    holders: dict[int, set[int]] = {}
    for c in clusters:
        for v in c.members:
            if v not in seeds:
                holders.setdefault(v, set()).add(c.seed)
    counts = {v: len(s) for v, s in sorted(holders.items())}
    report = TierReport(
        detection_count=counts,
        tier1=[v for v, c in counts.items() if c > 1],
        tier2=[v for v, c in counts.items() if c == 1],
        histogram=dict(sorted(Counter(counts.values()).items())),
        review_density=review_density,
    )
    if review_density is not None:
        dense = set()
        for c in clusters:
            if c.internal_density > review_density:
                dense.update(c.members)
        report.review = [v for v in report.tier2 if v in dense]
    return report


# --- expansion -------------------------------------------------------------


@dataclass(frozen=True)
class SeedTiming:
    seed_id: int
    n_sampled: int
    lp_iters: int
    wall_ms: float


@dataclass(frozen=True)
class SeedOutcome:
    seed: int
    cluster: AccompliceCluster | None
    timing: SeedTiming | None
    skip: str | None = None
    error: str | None = None
    density_full: Fraction | None = None
    flake_odf: Fraction | None = None


@dataclass
class PipelineResult:
    clusters: list[AccompliceCluster]
    tiers: TierReport
    outcomes: list[SeedOutcome]
    summary: str = ""

    @property
    def timings(self) -> list[SeedTiming]:
        return [o.timing for o in self.outcomes if o.timing is not None]

    @property
    def skips(self) -> list[SeedOutcome]:
        return [o for o in self.outcomes if o.skip or o.error]


def expand_seed(
    g: EngagementGraph,
    b: EngagementBipartite | None,
    seed: int,
    cfg: RunConfig,
) -> SeedOutcome:
    """Sample, diffuse, sweep and validate around a single seed."""
    if seed not in g.index:
        return SeedOutcome(seed, None, None, skip="seed not in graph")
    deg = g.degree(seed)
    if deg > cfg.d_max:
        return SeedOutcome(seed, None, None, skip=f"degree {deg} > d_max {cfg.d_max}")
    t0 = time.perf_counter()
    sg = sample_subgraph(g, seed, cfg.d_max, cfg.cap_n, cfg.m)
    spectra = local_spectra(sg, cfg.k, cfg.l, cfg.krylov_order, cfg.binary_adjacency)
    try:
        y = solve_l1(spectra, 0)
    except DiffusionError as exc:
        wall = (time.perf_counter() - t0) * 1e3
        return SeedOutcome(
            seed, None, SeedTiming(seed, sg.n_nodes, 0, wall), error=str(exc)
        )
    cluster = sweep_cut(sg, y, cfg.n_min, cfg.binary_adjacency)
    report = validate_tabc(cluster, sg, b, cfg.n_min, cfg.m, cfg.rho_min, cfg.delta_t)
    cluster = annotate(cluster, report, cfg.n_min, cfg.m, cfg.rho_min, cfg.delta_t)
    wall = (time.perf_counter() - t0) * 1e3
    dens = internal_density(cluster.members, g) if cluster.size > 1 else Fraction(0)
    return SeedOutcome(
        seed,
        cluster,
        SeedTiming(seed, sg.n_nodes, y.iterations, wall),
        density_full=dens,
        flake_odf=flake_odf(cluster.members, g),
    )


_REPLICA: tuple | None = None


def _initialize_replica(g, b, cfg):
    global _REPLICA
    _REPLICA = (g, b, cfg)
    try:
        from threadpoolctl import threadpool_limits

        threadpool_limits(1)
    except ImportError:  # pragma: no cover
        pass


def _replica_expand(seed: int) -> SeedOutcome:
    g, b, cfg = _REPLICA
    return expand_seed(g, b, seed, cfg)


def run_pipeline(
    g: EngagementGraph,
    b: EngagementBipartite | None,
    seeds: Iterable[int],
    cfg: RunConfig,
    review_density: float | None = None,
) -> PipelineResult:
    """Expand every seed independently and collect clusters in seed order.

    With ``worker_count > 1`` seeds are spread over forked worker processes
    that share the frozen graph; results do not depend on the worker count.
    """
    seeds = sorted(set(int(s) for s in seeds))
    if not seeds:
        raise ValueError("no seeds given")
    if cfg.worker_count == 1 or len(seeds) == 1:
        outcomes = [expand_seed(g, b, s, cfg) for s in seeds]
    else:
        ctx = mp.get_context("fork")
        workers = min(cfg.worker_count, len(seeds))
        chunk = max(1, len(seeds) // (workers * 8))
        with ProcessPoolExecutor(
            workers, mp_context=ctx, initializer=_initialize_replica, initargs=(g, b, cfg)
        ) as pool:
            outcomes = list(pool.map(_replica_expand, seeds, chunksize=chunk))
    for o in outcomes:
        if o.skip:
            log.info("seed %d skipped: %s", o.seed, o.skip)
        elif o.error:
            log.error("seed %d failed: %s", o.seed, o.error)
    clusters = [o.cluster for o in outcomes if o.cluster is not None]
    tiers = tier_classify(clusters, seeds, review_density)
    summary = (
        f"{len(seeds)} seeds, {len(clusters)} clusters, "
        f"{sum(1 for o in outcomes if o.skip)} skipped, "
        f"{sum(1 for o in outcomes if o.error)} failed"
    )
    if not clusters:
        summary += "; no seed produced a cluster"
    return PipelineResult(clusters, tiers, outcomes, summary)
