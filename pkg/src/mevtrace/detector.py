"""Incremental MEV cycle detection over an ordered transfer graph.

Edges are admitted in global order. For every node we keep the partial paths
that enter it; a new edge extends the paths sitting at its source when the
currency matches or the two edges are legs of the same swap. A path that
returns to its origin and satisfies every constraint is settled on the spot,
before the next edge is admitted.

Every edge of a valid cycle must have its swap partner in the cycle, so plain
transfers and fee edges never enter path state. With strict ordering a path
holding a swap leg whose partner has already gone by can never complete, so
such paths are dropped as soon as the frontier passes the partner.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .graph import Edge, TransferGraph
from .settlement import MevCycle, RateTable, learn_rate, settle

INF = float("inf")


class OrderError(RuntimeError):
    pass


@dataclass(frozen=True)
class PruneConfig:
    max_paths_per_node: float = 4096
    max_len: float = 64

    @classmethod
    def unbounded(cls) -> "PruneConfig":
        return cls(INF, INF)


@dataclass(frozen=True)
class DetectorConfig:
    prune: PruneConfig = PruneConfig()
    relaxed_endpoints: bool = False
    relaxed_budget: int = 200_000


class PartialPath:
    __slots__ = ("origin", "edges", "pending", "deadline", "currencies")

    def __init__(self, origin, edges, pending, currencies):
        self.origin = origin
        self.edges = edges  # tuple of Edge, increasing id
        self.pending = pending  # frozenset of partner edge ids still required
        self.deadline = min(pending) if pending else INF
        self.currencies = currencies

    @classmethod
    def start(cls, e: Edge) -> "PartialPath":
        return cls(e.src, (e,), frozenset((e.swap_partner,)), frozenset((e.currency,)))

    def extend(self, e: Edge) -> "PartialPath":
        pending = set(self.pending)
        if e.id in pending:
            pending.discard(e.id)
        else:
            pending.add(e.swap_partner)
        return PartialPath(self.origin, self.edges + (e,), frozenset(pending), self.currencies | {e.currency})

    @property
    def end(self):
        return self.edges[-1].dst

    @property
    def ids(self) -> tuple:
        return tuple(e.id for e in self.edges)

    def alive(self) -> bool:
        return all(e.residual > 0 for e in self.edges)

    def __repr__(self):
        return f"PartialPath({self.origin}, {self.ids})"


def adjacent_ok(prev: Edge, e: Edge) -> bool:
    return e.currency == prev.currency or e.swap_partner == prev.id


def check_cycle(path: PartialPath) -> bool:
    """Accept a closed path iff the pairing, currency and endpoint constraints hold.

    Ordering and adjacency are guaranteed by how paths are grown; this checks
    the remaining conditions from the path's incremental bookkeeping.
    """
    if path.end != path.origin:
        return False
    return (
        not path.pending
        and len(path.currencies) > 1
        and path.edges[0].currency == path.edges[-1].currency
    )


def _cycle_key(path: PartialPath):
    return (path.edges[0].id, path.ids)


class Detector:
    """Per-block detector state. Feed edges with :meth:`admit` or call :meth:`run`."""

    def __init__(self, graph: TransferGraph, config: DetectorConfig = DetectorConfig(), rates: Optional[RateTable] = None):
        self.graph = graph
        self.config = config
        self.rates = rates if rates is not None else RateTable()
        self.paths = {}  # node -> list of PartialPath ending there
        self.frontier = -1
        self.evictions = 0
        self.cycles = []
        self._by_id = dict(graph.edges)
        self._swept = {}

    def _push(self, node, path: PartialPath, now: int) -> None:
        bucket = self.paths.setdefault(node, [])
        cap = self.config.prune.max_paths_per_node
        if len(bucket) >= cap:
            # paths only die when the frontier moves or a cycle is consumed,
            # so one sweep per (edge, settlement count) is enough
            version = (now, len(self.cycles))
            if self._swept.get(node) != version:
                bucket[:] = [p for p in bucket if p.deadline > now and p.alive()]
                self._swept[node] = version
            if len(bucket) >= cap:
                self.evictions += 1
                return
        bucket.append(path)

    def admit(self, e: Edge) -> list:
        if e.id <= self.frontier:
            raise OrderError(f"edge {e.id} admitted after {self.frontier}")
        self.frontier = e.id
        if not e.is_swap_leg:
            return []
        if e.swap_partner < e.id:
            partner = self._by_id.get(e.swap_partner)
            if partner is not None:
                learn_rate(partner, e, self.rates, (self.graph.block_number, e.id))
        if e.residual <= 0:
            return []

        max_len = self.config.prune.max_len
        closed = []
        grown = []
        bucket = self.paths.get(e.src)
        if bucket:
            keep = []
            for p in bucket:
                if p.deadline < e.id or not p.alive():
                    continue
                if p.deadline > e.id:
                    keep.append(p)
                if not adjacent_ok(p.edges[-1], e):
                    continue
                if e.id not in p.pending and e.swap_partner < e.id:
                    continue
                if len(p.edges) >= max_len:
                    self.evictions += 1
                    continue
                q = p.extend(e)
                grown.append(q)
                if q.end == q.origin and check_cycle(q):
                    closed.append(q)
            self.paths[e.src] = keep
        for q in grown:
            self._push(e.dst, q, e.id)
        if e.swap_partner > e.id:
            self._push(e.dst, PartialPath.start(e), e.id)

        emitted = []
        for q in sorted(closed, key=_cycle_key):
            cycle = settle(self.graph, q.edges)
            if cycle is not None:
                emitted.append(cycle)
        self.cycles.extend(emitted)
        return emitted

    def run(self) -> list:
        for e in list(self.graph.edges.values()):
            self.admit(e)
        if self.config.relaxed_endpoints:
            self.cycles.extend(self._relaxed_pass())
        return self.cycles

    def _relaxed_pass(self) -> list:
        """Cycles whose first and last edges sit outside the time order of the rest.

        Runs once on the residual graph after strict detection; candidates are
        settled in lexicographic order of their edge ids.
        """
        live = [e for e in self.graph.edges.values() if e.is_swap_leg]
        out_edges = {}
        for e in live:
            out_edges.setdefault(e.src, []).append(e)
        budget = [self.config.relaxed_budget]
        found = []
        max_len = self.config.prune.max_len

        def strictly_increasing(path):
            ids = path.ids
            return all(a < b for a, b in zip(ids, ids[1:]))

        def grow(path: PartialPath, last_interior: int, used: frozenset):
            for e in out_edges.get(path.end, ()):
                if e.id in used or not adjacent_ok(path.edges[-1], e):
                    continue
                budget[0] -= 1
                if budget[0] < 0:
                    return
                q = path.extend(e)
                if e.dst == path.origin and check_cycle(q) and not strictly_increasing(q):
                    found.append(q)
                if e.id > last_interior and len(q.edges) < max_len:
                    grow(q, e.id, used | {e.id})

        for first in live:
            grow(PartialPath.start(first), -1, frozenset((first.id,)))
            if budget[0] < 0:
                self.evictions += 1
                break
        emitted = []
        for q in sorted(found, key=lambda p: p.ids):
            cycle = settle(self.graph, q.edges, relaxed=True)
            if cycle is not None:
                emitted.append(cycle)
        return emitted


def prune_paths(detector: Detector, policy: PruneConfig) -> Detector:
    """Apply caps to existing path state, counting every evicted path."""
    for node, bucket in detector.paths.items():
        kept = [p for p in bucket if len(p.edges) <= policy.max_len]
        if len(kept) > policy.max_paths_per_node:
            kept = kept[: int(policy.max_paths_per_node)]
        detector.evictions += len(bucket) - len(kept)
        detector.paths[node] = kept
    return detector


def detect_cycles(graph: TransferGraph, config: DetectorConfig = DetectorConfig(), rates: Optional[RateTable] = None):
    det = Detector(graph, config, rates)
    det.run()
    return det
