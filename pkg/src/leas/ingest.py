"""Engagement event parsing and the temporal engagement bipartite."""

from __future__ import annotations

import json
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence, TextIO

log = logging.getLogger(__name__)

U64_MAX = 2**64 - 1
FULL_WINDOW = (0, U64_MAX)


class IngestError(Exception):
    """Fatal input problem (unreadable stream)."""


@dataclass(frozen=True)
class EngagementEvent:
    actor_id: int
    target_id: int
    timestamp: int
    owner_id: int | None = None

    def __post_init__(self):
        if self.timestamp < 0:
            raise ValueError(f"negative timestamp {self.timestamp}")
        if self.actor_id == 0 or self.target_id == 0:
            raise ValueError("actor and target ids must be nonzero")


@dataclass
class ParseReport:
    parsed: int = 0
    rejected: list[tuple[int, str]] = field(default_factory=list)
    dropped_by_window: int = 0
    duplicates: int = 0

    def to_text(self) -> str:
        lines = [
            f"# parsed={self.parsed} rejected={len(self.rejected)} "
            f"dropped_by_window={self.dropped_by_window} duplicates={self.duplicates}"
        ]
        lines += [f"{lineno}\t{reason}" for lineno, reason in self.rejected]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class EngagementBipartite:
    """Timestamped actor -> target edges within a closed time window.

    ``edges`` maps each actor to its ``(target_id, timestamp)`` pairs sorted
    ascending. ``owners`` only holds explicit owner attributions; an actor
    missing from it owns itself.
    """

    actors: frozenset[int]
    targets: frozenset[int]
    edges: Mapping[int, tuple[tuple[int, int], ...]]
    window: tuple[int, int]
    owners: Mapping[int, int] = field(default_factory=dict)
    report: ParseReport | None = field(default=None, compare=False, repr=False)

    @property
    def edge_count(self) -> int:
        return sum(len(v) for v in self.edges.values())

    @cached_property
    def by_target(self) -> dict[int, dict[int, tuple[int, ...]]]:
        """target -> actor -> sorted timestamps."""
        out: dict[int, dict[int, list[int]]] = defaultdict(lambda: defaultdict(list))
        for actor, pairs in self.edges.items():
            for target, ts in pairs:
                out[target][actor].append(ts)
        return {
            q: {a: tuple(ts) for a, ts in sorted(acts.items())}
            for q, acts in sorted(out.items())
        }

    @cached_property
    def _actor_target_ts(self) -> dict[int, dict[int, tuple[int, ...]]]:
        out: dict[int, dict[int, list[int]]] = {}
        for actor, pairs in self.edges.items():
            per: dict[int, list[int]] = defaultdict(list)
            for target, ts in pairs:
                per[target].append(ts)
            out[actor] = {q: tuple(v) for q, v in per.items()}
        return out

    def timestamps(self, actor: int, target: int) -> tuple[int, ...]:
        return self._actor_target_ts.get(actor, {}).get(target, ())

    def targets_of(self, actor: int) -> set[int]:
        return set(self._actor_target_ts.get(actor, {}))

    def owner_of(self, actor: int) -> int:
        return self.owners.get(actor, actor)

    def events(self) -> Iterator[EngagementEvent]:
        for actor in sorted(self.edges):
            owner = self.owners.get(actor)
            for target, ts in self.edges[actor]:
                yield EngagementEvent(actor, target, ts, owner)

    def filter_window(self, window: tuple[int, int]) -> "EngagementBipartite":
        return from_events(self.events(), window)


def temporal_coherence(events: Sequence[int], delta_t: float) -> bool:
    """True iff some reference time lies within ``delta_t`` of every event."""
    if len(events) == 0:
        raise ValueError("temporal coherence of an empty event list is vacuous")
    if delta_t < 0:
        raise ValueError("delta_t must be nonnegative")
    return max(events) - min(events) <= 2 * delta_t


def _as_u64(obj: dict, key: str, *, nonzero: bool) -> int:
    val = obj[key]
    if isinstance(val, bool) or not isinstance(val, int):
        raise ValueError(f"field {key!r} is not an integer")
    if val < 0 or val > U64_MAX:
        raise ValueError(f"field {key!r} out of u64 range")
    if nonzero and val == 0:
        raise ValueError(f"field {key!r} must be nonzero")
    return val


def parse_record(line: str) -> EngagementEvent:
    obj = json.loads(line)
    if not isinstance(obj, dict):
        raise ValueError("record is not a JSON object")
    for key in ("actor", "target", "ts"):
        if key not in obj:
            raise ValueError(f"missing field {key!r}")
    extra = set(obj) - {"actor", "target", "ts", "owner"}
    if extra:
        raise ValueError(f"unknown fields {sorted(extra)}")
    owner = None
    if obj.get("owner") is not None:
        owner = _as_u64(obj, "owner", nonzero=True)
    return EngagementEvent(
        _as_u64(obj, "actor", nonzero=True),
        _as_u64(obj, "target", nonzero=True),
        _as_u64(obj, "ts", nonzero=False),
        owner,
    )


def from_events(
    events: Iterable[EngagementEvent],
    window: tuple[int, int] = FULL_WINDOW,
    report: ParseReport | None = None,
) -> EngagementBipartite:
    start, end = window
    if start > end:
        raise ValueError(f"empty window {window}")
    report = report if report is not None else ParseReport()
    seen: dict[int, set[tuple[int, int]]] = defaultdict(set)
    owners: dict[int, int] = {}
    for ev in events:
        if not start <= ev.timestamp <= end:
            report.dropped_by_window += 1
            continue
        key = (ev.target_id, ev.timestamp)
        if key in seen[ev.actor_id]:
            report.duplicates += 1
            continue
        seen[ev.actor_id].add(key)
        if ev.owner_id is not None and ev.owner_id != ev.actor_id:
            owners.setdefault(ev.actor_id, ev.owner_id)
    edges = {a: tuple(sorted(pairs)) for a, pairs in sorted(seen.items()) if pairs}
    targets = frozenset(q for pairs in edges.values() for q, _ in pairs)
    return EngagementBipartite(
        actors=frozenset(edges),
        targets=targets,
        edges=edges,
        window=(start, end),
        owners={a: o for a, o in sorted(owners.items()) if a in edges},
        report=report,
    )


def parse_events(
    stream: TextIO | Iterable[str] | str | Path,
    window: tuple[int, int] = FULL_WINDOW,
) -> EngagementBipartite:
    """Parse a JSON-lines event log into a bipartite restricted to ``window``.

    Malformed lines are collected in ``result.report.rejected`` as
    ``(line_number, reason)`` and parsing continues. An actor attributed to
    two different owners keeps the first and the conflicting line is rejected.
    """
    if window[0] > window[1]:
        raise ValueError(f"empty window {window}")
    report = ParseReport()
    if isinstance(stream, (str, Path)):
        try:
            fh = open(stream, encoding="utf-8")
        except OSError as exc:
            raise IngestError(f"cannot read events from {stream}: {exc}") from exc
        with fh:
            return _parse_lines(fh, window, report)
    return _parse_lines(stream, window, report)


def _parse_lines(lines: Iterable[str], window, report: ParseReport) -> EngagementBipartite:
    owners: dict[int, int] = {}
    good: list[EngagementEvent] = []
    try:
        for lineno, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            try:
                ev = parse_record(line)
            except (ValueError, KeyError) as exc:
                report.rejected.append((lineno, str(exc)))
                continue
            if ev.owner_id is not None:
                prev = owners.setdefault(ev.actor_id, ev.owner_id)
                if prev != ev.owner_id:
                    report.rejected.append(
                        (lineno, f"actor {ev.actor_id} owner {ev.owner_id} conflicts with {prev}")
                    )
                    continue
            report.parsed += 1
            good.append(ev)
    except (OSError, UnicodeDecodeError) as exc:
        raise IngestError(f"event stream unreadable: {exc}") from exc
    if report.rejected:
        log.warning("rejected %d malformed event lines", len(report.rejected))
    return from_events(good, window, report)


def format_event(ev: EngagementEvent) -> str:
    obj = {"actor": ev.actor_id, "target": ev.target_id, "ts": ev.timestamp}
    if ev.owner_id is not None:
        obj["owner"] = ev.owner_id
    return json.dumps(obj, separators=(",", ":"))


def serialize_events(b: EngagementBipartite | Iterable[EngagementEvent]) -> list[str]:
    events = b.events() if isinstance(b, EngagementBipartite) else b
    return [format_event(ev) for ev in events]
