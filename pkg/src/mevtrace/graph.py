"""Per-block ordered transfer multigraph with exact residual capacities."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .model import Address, BlockRecord, Currency, ratio_str


@dataclass(eq=False)
class Edge:
    id: int
    src: Address
    dst: Address
    currency: Currency
    capacity: int
    residual: Fraction
    tx_index: int
    swap_partner: Optional[int] = None
    swap_id: Optional[int] = None
    synthetic: bool = False

    @property
    def is_swap_leg(self) -> bool:
        return self.swap_partner is not None


@dataclass
class TransferGraph:
    block_number: int
    nodes: set = field(default_factory=set)
    # id -> Edge, kept in ascending id (= global order)
    edges: dict = field(default_factory=dict)
    # (tx_index, swap_id) -> (input edge id, output edge id)
    swap_classes: dict = field(default_factory=dict)

    def ordered(self):
        return list(self.edges.values())

    def residual(self, edge_id: int) -> Fraction:
        e = self.edges.get(edge_id)
        return Fraction(0) if e is None else e.residual

    def consume(self, edge_id: int, amount: Fraction) -> None:
        e = self.edges[edge_id]
        left = e.residual - amount
        if left < 0:
            raise ValueError(f"edge {edge_id} over-consumed by {-left}")
        e.residual = left
        if left == 0:
            del self.edges[edge_id]

    def dump(self) -> str:
        """Deterministic edge list: ``idx from to currency amount residual [swap_id]``."""
        lines = []
        for e in self.edges.values():
            parts = [str(e.id), e.src, e.dst, e.currency.label(), str(e.capacity), ratio_str(e.residual)]
            if e.swap_id is not None:
                parts.append(str(e.swap_id))
            lines.append(" ".join(parts))
        return "".join(line + "\n" for line in lines)


def build_graph(block: BlockRecord) -> TransferGraph:
    """One edge per transfer in global order; self-transfers are dropped."""
    g = TransferGraph(block.number)
    legs = {}
    for t in block.transfers():
        if t.sender == t.receiver:
            continue
        e = Edge(
            id=t.global_index,
            src=t.sender,
            dst=t.receiver,
            currency=t.currency,
            capacity=t.amount,
            residual=Fraction(t.amount),
            tx_index=t.tx_index,
            swap_id=t.swap_id,
            synthetic=t.synthetic,
        )
        g.edges[e.id] = e
        g.nodes.add(e.src)
        g.nodes.add(e.dst)
        if t.swap_id is not None:
            legs.setdefault((t.tx_index, t.swap_id), []).append(e)
    for key, pair in legs.items():
        if len(pair) != 2:
            continue
        a, b = sorted(pair, key=lambda e: e.id)
        a.swap_partner, b.swap_partner = b.id, a.id
        g.swap_classes[key] = (a.id, b.id)
    return g


def _mergeable(e1: Edge, e2: Edge) -> bool:
    return (
        e1.dst == e2.src
        and e1.currency == e2.currency
        and e1.capacity == e2.capacity
        and e1.tx_index == e2.tx_index
        and not e1.is_swap_leg
        and not e2.is_swap_leg
        and not e1.synthetic
        and not e2.synthetic
        and e1.residual == e1.capacity
        and e2.residual == e2.capacity
    )


def coalesce_step(graph: TransferGraph) -> Optional[TransferGraph]:
    """Apply the first available pass-through merge, or return None at fixpoint."""
    edges = graph.ordered()
    for i in range(len(edges) - 1):
        e1, e2 = edges[i], edges[i + 1]
        if _mergeable(e1, e2):
            merged = _merged(e1, e2)
            rest = edges[:i] + ([merged] if merged.src != merged.dst else []) + edges[i + 2 :]
            return _rebuild(graph, rest)
    return None


def _merged(e1: Edge, e2: Edge) -> Edge:
    return Edge(e1.id, e1.src, e2.dst, e1.currency, e1.capacity, Fraction(e1.capacity), e1.tx_index)


def _rebuild(graph: TransferGraph, edges) -> TransferGraph:
    g = TransferGraph(graph.block_number, swap_classes=dict(graph.swap_classes))
    for e in edges:
        e = copy.copy(e)
        g.edges[e.id] = e
        g.nodes.add(e.src)
        g.nodes.add(e.dst)
    return g


def coalesce_edges(graph: TransferGraph) -> TransferGraph:
    """Collapse forwarding hops ``a->b, b->x`` of equal value into ``a->x`` until fixpoint.

    Only consecutive plain edges inside one transaction are merged. A merge
    that degenerates into a self-transfer removes both edges.
    """
    out = []
    for e in graph.ordered():
        if out and _mergeable(out[-1], e):
            merged = _merged(out.pop(), e)
            if merged.src != merged.dst:
                out.append(merged)
        else:
            out.append(e)
    return _rebuild(graph, out)
