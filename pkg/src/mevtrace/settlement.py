"""Cycle flow, consumption, learned rates and cycle coalescing.

All quantities are exact rationals. Swaps convert at their full observed ratio
regardless of how much flow passes through them.
"""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .graph import Edge, TransferGraph
from .model import NATIVE, Address, Currency

log = logging.getLogger(__name__)


@dataclass
class MevCycle:
    edge_ids: tuple
    anchor: Address
    anchor_currency: Currency
    flow_factor: Fraction
    flows: tuple
    deltas: dict  # (Address, Currency) -> Fraction
    profit: Fraction  # anchor_currency base units
    tx_indices: frozenset
    currencies: frozenset
    nodes: frozenset
    relaxed: bool = False

    @property
    def closing_edge(self) -> int:
        return self.edge_ids[-1]

    def anchor_deltas(self) -> dict:
        return {c: v for (a, c), v in self.deltas.items() if a == self.anchor and v != 0}


class RateTable:
    """Last observed swap ratio per ordered currency pair.

    Each entry is (rate, observation_key); the key is any totally ordered
    value, typically (block number, edge id). Unseen pairs return None.
    """

    def __init__(self):
        self._rates = {}

    def __len__(self):
        return len(self._rates)

    def __eq__(self, other):
        return isinstance(other, RateTable) and self._rates == other._rates

    def items(self):
        return sorted(self._rates.items(), key=lambda kv: (kv[0][0].sort_key(), kv[0][1].sort_key()))

    def observe(self, cin: Currency, cout: Currency, rate: Fraction, key) -> None:
        for pair, r in (((cin, cout), rate), ((cout, cin), 1 / rate)):
            prev = self._rates.get(pair)
            if prev is None or prev[1] <= key:
                self._rates[pair] = (r, key)

    def rate(self, a: Currency, b: Currency) -> Optional[Fraction]:
        if a == b:
            return Fraction(1)
        hit = self._rates.get((a, b))
        return None if hit is None else hit[0]

    def key(self, a: Currency, b: Currency):
        hit = self._rates.get((a, b))
        return None if hit is None else hit[1]

    def sources(self, a: Currency):
        return [b for (x, b) in self._rates if x == a]

    def merge(self, newer: "RateTable") -> "RateTable":
        out = RateTable()
        out._rates = dict(self._rates)
        for pair, (r, key) in newer._rates.items():
            prev = out._rates.get(pair)
            if prev is None or prev[1] <= key:
                out._rates[pair] = (r, key)
        return out


def learn_rate(in_leg: Edge, out_leg: Edge, table: RateTable, key) -> bool:
    """Record out/in for a two-leg swap. Zero-amount legs are skipped."""
    if in_leg.capacity == 0 or out_leg.capacity == 0:
        log.warning("swap with zero-amount leg at edges %d/%d skipped", in_leg.id, out_leg.id)
        return False
    if in_leg.currency == out_leg.currency:
        return False
    table.observe(in_leg.currency, out_leg.currency, Fraction(out_leg.capacity, in_leg.capacity), key)
    return True


def unit_flows(edges) -> list:
    """Flow on every edge when the first edge carries its full residual."""
    y = [Fraction(edges[0].residual)]
    for prev, e in zip(edges, edges[1:]):
        if e.swap_partner == prev.id:
            y.append(y[-1] * e.capacity / prev.capacity)
        else:
            y.append(y[-1])
    return y


def max_cycle_flow(edges):
    """Largest factor f in (0, 1] such that every implied edge flow fits its residual.

    Returns ``(f, flows)`` or ``None`` when an edge has no residual left.
    """
    if any(e.residual <= 0 for e in edges):
        return None
    y = unit_flows(edges)
    f = Fraction(1)
    for e, need in zip(edges, y):
        if need > e.residual:
            f = min(f, e.residual / need)
    return f, tuple(f * v for v in y)


def consume_cycle(graph: TransferGraph, edges, f: Fraction, flows, relaxed: bool = False) -> MevCycle:
    deltas = defaultdict(Fraction)
    for e, x in zip(edges, flows):
        deltas[(e.src, e.currency)] -= x
        deltas[(e.dst, e.currency)] += x
        graph.consume(e.id, x)
    first, last = edges[0], edges[-1]
    nodes = set()
    for e in edges:
        nodes.add(e.src)
        nodes.add(e.dst)
    return MevCycle(
        edge_ids=tuple(e.id for e in edges),
        anchor=first.src,
        anchor_currency=first.currency,
        flow_factor=f,
        flows=tuple(flows),
        deltas=dict(deltas),
        profit=flows[-1] - flows[0],
        tx_indices=frozenset(e.tx_index for e in edges),
        currencies=frozenset(e.currency for e in edges),
        nodes=frozenset(nodes),
        relaxed=relaxed,
    )


def settle(graph: TransferGraph, edges, relaxed: bool = False) -> Optional[MevCycle]:
    hit = max_cycle_flow(edges)
    if hit is None:
        return None
    f, flows = hit
    return consume_cycle(graph, edges, f, flows, relaxed)


@dataclass
class Valuation:
    total: Fraction
    partial: bool
    unvalued: dict = field(default_factory=dict)


def native_rate(c: Currency, rates: RateTable) -> Optional[Fraction]:
    """Rate to the native currency, directly or through one intermediate."""
    if c == NATIVE:
        return Fraction(1)
    direct = rates.rate(c, NATIVE)
    if direct is not None:
        return direct
    hops = []
    for m in rates.sources(c):
        if m == NATIVE:
            continue
        second = rates.rate(m, NATIVE)
        if second is not None:
            hops.append((rates.key(c, m), m.sort_key(), rates.rate(c, m) * second))
    if not hops:
        return None
    # most recently observed first hop wins; the currency key breaks ties
    hops.sort(key=lambda h: (h[0], h[1]))
    return hops[-1][2]


def value_in_eth(deltas: dict, rates: RateTable) -> Valuation:
    total = Fraction(0)
    unvalued = {}
    for c in sorted(deltas, key=Currency.sort_key):
        v = deltas[c]
        if v == 0:
            continue
        r = native_rate(c, rates)
        if r is None:
            unvalued[c] = v
        else:
            total += v * r
    return Valuation(total, bool(unvalued), unvalued)


@dataclass
class MevExtraction:
    block_number: int
    cycles: list
    beneficiary: Address
    tx_indices: tuple
    anchor_deltas: dict  # Currency -> Fraction
    gross_profit_eth: Fraction = Fraction(0)
    valuation_partial: bool = False
    unvalued: dict = field(default_factory=dict)
    burnt_fees_eth: Fraction = Fraction(0)
    miner_tip_eth: Fraction = Fraction(0)
    miner_transfer_eth: Fraction = Fraction(0)
    net_bot_profit_eth: Fraction = Fraction(0)
    category: Optional[str] = None
    privacy_share: Optional[Fraction] = None
    relay_tagged: bool = False
    miner_share: Optional[Fraction] = None
    driver: Optional[str] = None

    @property
    def currencies(self) -> frozenset:
        out = set()
        for c in self.cycles:
            out |= c.currencies
        return frozenset(out)

    def sort_key(self):
        return (self.block_number, self.tx_indices[0], self.beneficiary)


def coalesce_cycles(cycles, block_number: int, rates: Optional[RateTable] = None) -> list:
    """Merge cycles sharing an anchor and at least one transaction, transitively."""
    parent = list(range(len(cycles)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(len(cycles)):
        for j in range(i + 1, len(cycles)):
            a, b = cycles[i], cycles[j]
            if a.anchor == b.anchor and a.tx_indices & b.tx_indices:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[max(ri, rj)] = min(ri, rj)
    groups = defaultdict(list)
    for i, c in enumerate(cycles):
        groups[find(i)].append(c)
    out = []
    for members in groups.values():
        anchor = members[0].anchor
        deltas = defaultdict(Fraction)
        txs = set()
        for c in members:
            txs |= c.tx_indices
            for cur, v in c.anchor_deltas().items():
                deltas[cur] += v
        ex = MevExtraction(
            block_number=block_number,
            cycles=list(members),
            beneficiary=anchor,
            tx_indices=tuple(sorted(txs)),
            anchor_deltas={c: v for c, v in deltas.items() if v != 0},
        )
        if rates is not None:
            val = value_in_eth(ex.anchor_deltas, rates)
            ex.gross_profit_eth = val.total
            ex.valuation_partial = val.partial
            ex.unvalued = val.unvalued
        out.append(ex)
    out.sort(key=MevExtraction.sort_key)
    return out
