"""Ground-truthed synthetic engagement data.

All randomness comes from ``numpy.random.Generator(PCG64(rng_seed))``; the
algorithm name is recorded in every spec's metadata.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .graph import EngagementGraph, _assemble
from .ingest import EngagementEvent, format_event

RNG_ALGORITHM = "numpy.random.PCG64"
BACKGROUND = "background"


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class PlantedSpec:
    """Planted-partition model.

    ``groups`` are ``(size, p)`` pairs; ``overlaps`` are
    ``(group_i, group_j, count)`` with ``i < j``: group ``j`` reuses ``count``
    members of group ``i``. ``background_nodes`` adds unlabeled nodes. Every
    pair not inside a common group is joined with ``background_p``.
    """

    groups: tuple[tuple[int, float], ...]
    overlaps: tuple[tuple[int, int, int], ...] = ()
    background_p: float = 0.0
    background_nodes: int = 0
    rng_seed: int = 0

    def __post_init__(self):
        for size, p in self.groups:
            if size < 1 or not 0 <= p <= 1:
                raise ValueError(f"bad group ({size}, {p})")
        if not 0 <= self.background_p <= 1 or self.background_nodes < 0:
            raise ValueError("bad background parameters")
        for i, j, c in self.overlaps:
            if not 0 <= i < j < len(self.groups):
                raise ValueError(f"overlap ({i}, {j}) must reference groups i < j")
            if c < 0 or c > min(self.groups[i][0], self.groups[j][0]):
                raise ValueError(f"overlap count {c} exceeds a group size")
        if len(self.groups) > 62:
            raise ValueError("at most 62 groups")

    def metadata(self) -> dict:
        return {
            "spec": asdict(self),
            "rng": RNG_ALGORITHM,
            "assumption": "background_p applies to every pair not inside a common group",
        }


def overlap_preset(rng_seed: int = 0) -> PlantedSpec:
    """Two overlapping dense spam groups A, B and a looser organic group C."""
    return PlantedSpec(
        groups=((100, 0.9), (100, 0.9), (320, 0.2)),
        overlaps=((0, 1, 20),),
        background_p=0.05,
        rng_seed=rng_seed,
    )


@dataclass
class PlantedGraph:
    graph: EngagementGraph
    groups: list[np.ndarray]  # node ids per group
    labels: dict[int, tuple[int, ...]]
    spec: PlantedSpec

    def truth_lines(self) -> list[str]:
        out = []
        for v, gs in sorted(self.labels.items()):
            lab = ",".join(f"g{g}" for g in gs) if gs else BACKGROUND
            out.append(f"{v}\t{lab}")
        return out


def _layout(spec: PlantedSpec) -> tuple[int, list[np.ndarray]]:
    members: list[list[int]] = []
    next_id = 0
    for j, (size, _p) in enumerate(spec.groups):
        mine: list[int] = []
        for i, jj, c in spec.overlaps:
            if jj != j or c == 0:
                continue
            avail = [v for v in reversed(members[i]) if v not in mine]
            mine.extend(avail[:c])
        if len(mine) > size:
            raise ValueError(f"group {j} overlaps exceed its size")
        fresh = size - len(mine)
        mine.extend(range(next_id, next_id + fresh))
        next_id += fresh
        members.append(sorted(mine))
    n = next_id + spec.background_nodes
    return n, [np.array(m, dtype=np.int64) for m in members]


def _pair_from_index(t: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Map a linear index over ``i < j`` pairs (row-major) back to ``(i, j)``."""
    t = t.astype(np.int64)
    b = 2 * n - 1
    i = np.floor((b - np.sqrt(float(b) ** 2 - 8.0 * t)) / 2).astype(np.int64)
    start = i * (2 * n - i - 1) // 2
    # float rounding can land one row off
    over = start > t
    i[over] -= 1
    start = i * (2 * n - i - 1) // 2
    under = t - start >= n - 1 - i
    i[under] += 1
    start = i * (2 * n - i - 1) // 2
    j = t - start + i + 1
    return i, j


def _gnp_pairs(rng: np.random.Generator, n: int, p: float):
    total = n * (n - 1) // 2
    if total == 0 or p == 0:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    count = int(rng.binomial(total, p))
    t = rng.choice(total, size=count, replace=False) if p < 1 else np.arange(total)
    return _pair_from_index(np.sort(t), n)


def generate_planted_graph(spec: PlantedSpec) -> PlantedGraph:
    """Unit-weight planted-partition graph with node ids ``1..n``.

    A pair inside several common groups draws from the first of them.
    """
    rng = make_rng(spec.rng_seed)
    n, groups = _layout(spec)
    mask = np.zeros(n, dtype=np.int64)
    for g, mem in enumerate(groups):
        mask[mem] |= 1 << g
    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    for g, (mem, (_size, p)) in enumerate(zip(groups, spec.groups)):
        i, j = _gnp_pairs(rng, len(mem), p)
        a, b = mem[i], mem[j]
        common = mask[a] & mask[b]
        earlier = common & ((1 << g) - 1)
        keep = earlier == 0
        rows.append(a[keep])
        cols.append(b[keep])
    i, j = _gnp_pairs(rng, n, spec.background_p)
    keep = (mask[i] & mask[j]) == 0
    rows.append(i[keep])
    cols.append(j[keep])
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    ids = np.arange(1, n + 1, dtype=np.uint64)
    graph = _assemble(ids, r, c, np.ones(len(r)))
    labels = {
        v + 1: tuple(g for g in range(len(groups)) if mask[v] >> g & 1) for v in range(n)
    }
    return PlantedGraph(graph, [mem + 1 for mem in groups], labels, spec)


@dataclass(frozen=True)
class SpamCampaignSpec:
    """Lockstep campaign hidden among independent organic activity.

    Every spammer acts on each of ``actions_per_spammer`` campaign targets
    inside a ``burst_window`` second burst; organic actors act at
    ``organic_rate`` actions per day as a Poisson process over ``horizon``
    seconds, picking targets with Zipf-like popularity.
    """

    spammer_count: int = 15
    target_pool_size: int = 20000
    actions_per_spammer: int = 10
    burst_window: int = 60
    organic_actor_count: int = 2000
    organic_rate: float = 0.2
    owner_fanout: int = 1
    horizon: int = 30 * 86400
    start_ts: int = 1_700_000_000
    popularity_exponent: float = 0.5
    rng_seed: int = 0

    def __post_init__(self):
        if self.spammer_count < 0 or self.organic_actor_count < 0:
            raise ValueError("counts must be nonnegative")
        if self.spammer_count + self.organic_actor_count == 0:
            raise ValueError("need at least one actor")
        if self.target_pool_size < 1 or self.owner_fanout < 1:
            raise ValueError("target_pool_size and owner_fanout must be positive")
        if self.spammer_count and not 1 <= self.actions_per_spammer <= self.target_pool_size:
            raise ValueError("actions_per_spammer must fit the target pool")
        if self.burst_window < 0 or self.burst_window > self.horizon:
            raise ValueError("burst_window must lie in [0, horizon]")
        if self.organic_rate < 0:
            raise ValueError("organic_rate must be nonnegative")

    def metadata(self) -> dict:
        return {"spec": asdict(self), "rng": RNG_ALGORITHM}


@dataclass
class CampaignLog:
    events: list[EngagementEvent]
    spammers: list[int]
    organic: list[int]
    owners: dict[int, int] = field(default_factory=dict)
    campaign_targets: list[int] = field(default_factory=list)
    spec: SpamCampaignSpec | None = None

    def lines(self) -> list[str]:
        return [format_event(ev) for ev in self.events]

    def truth_lines(self) -> list[str]:
        lab = {v: "spammer" for v in self.spammers}
        lab.update({v: "organic" for v in self.organic})
        return [f"{v}\t{lab[v]}" for v in sorted(lab)]


def generate_campaign_log(spec: SpamCampaignSpec) -> CampaignLog:
    rng = make_rng(spec.rng_seed)
    n_actors = spec.spammer_count + spec.organic_actor_count
    ids = rng.permutation(n_actors) + 1
    spammers = sorted(int(v) for v in ids[: spec.spammer_count])
    organic = sorted(int(v) for v in ids[spec.spammer_count :])
    target_ids = rng.permutation(spec.target_pool_size) + 1

    owners: dict[int, int] = {}
    if spec.owner_fanout > 1:
        for k, v in enumerate(spammers):
            owners[v] = n_actors + 1 + k // spec.owner_fanout

    events: list[EngagementEvent] = []
    campaign: list[int] = []
    if spammers:
        picks = rng.choice(spec.target_pool_size, size=spec.actions_per_spammer, replace=False)
        campaign = sorted(int(target_ids[i]) for i in picks)
        for q in campaign:
            t0 = spec.start_ts + int(rng.integers(0, spec.horizon - spec.burst_window + 1))
            offs = rng.integers(0, spec.burst_window + 1, size=len(spammers))
            for v, off in zip(spammers, offs):
                events.append(EngagementEvent(v, q, t0 + int(off), owners.get(v)))

    ranks = np.arange(1, spec.target_pool_size + 1, dtype=np.float64)
    pop = ranks ** -spec.popularity_exponent
    pop /= pop.sum()
    rate = spec.organic_rate / 86400.0
    for v in organic:
        count = int(rng.poisson(rate * spec.horizon)) if rate > 0 else 0
        if count == 0:
            continue
        # Poisson count with uniform arrivals is a Poisson process on the horizon
        ts = np.sort(rng.uniform(0, spec.horizon, size=count))
        targets = target_ids[rng.choice(spec.target_pool_size, size=len(ts), p=pop)]
        for q, t in zip(targets, ts):
            events.append(EngagementEvent(v, int(q), spec.start_ts + int(t)))

    events.sort(key=lambda e: (e.timestamp, e.actor_id, e.target_id))
    return CampaignLog(events, spammers, organic, owners, campaign, spec)


def spec_json(spec) -> str:
    return json.dumps(spec.metadata(), indent=2, sort_keys=True) + "\n"
