"""Brute-force reference implementations used to check the detector.

Nothing here imports the detector or settlement code: the constraint checks,
the enumeration and the flow arithmetic are written out independently.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction

DEFAULT_MAX_EDGES = 14


class OracleRefused(ValueError):
    """Raised when a graph is too large for exhaustive enumeration."""


def _partners(a, b) -> bool:
    return a.swap_partner is not None and a.swap_partner == b.id and b.swap_partner == a.id


def validate_cycle(edges, relaxed: bool = False) -> list:
    """Return the names of violated constraints (empty list means a valid cycle)."""
    bad = []
    ids = [e.id for e in edges]
    if len(edges) < 2:
        return ["too_short"]
    if len(set(ids)) != len(ids):
        bad.append("distinct")
    order = ids[1:-1] if relaxed else ids
    if any(x >= y for x, y in zip(order, order[1:])):
        bad.append("order")
    for x, y in zip(edges, edges[1:]):
        if x.dst != y.src:
            bad.append("chain")
            break
    if edges[-1].dst != edges[0].src:
        bad.append("closed")
    for x, y in zip(edges, edges[1:]):
        if not (x.currency == y.currency or _partners(x, y)):
            bad.append("adjacency")
            break
    if len({e.currency for e in edges}) < 2:
        bad.append("currencies")
    idset = set(ids)
    if any(e.swap_partner is None or e.swap_partner not in idset for e in edges):
        bad.append("pairing")
    if edges[0].currency != edges[-1].currency:
        bad.append("endpoints")
    return bad


def _strictly_increasing(ids) -> bool:
    return all(x < y for x, y in zip(ids, ids[1:]))


def _order_free_ok(combo) -> bool:
    """Constraints that do not depend on edge order: pairing and currency count."""
    ids = {e.id for e in combo}
    if any(e.swap_partner is None or e.swap_partner not in ids for e in combo):
        return False
    return len({e.currency for e in combo}) >= 2


def candidates_by_subsets(edges, relaxed: bool = False) -> list:
    """Every constraint-satisfying cycle, found by trying all edge subsets."""
    found = []
    n = len(edges)
    for size in range(2, n + 1):
        for combo in itertools.combinations(edges, size):
            if not validate_cycle(combo):
                found.append(tuple(e.id for e in combo))
            if not relaxed or not _order_free_ok(combo):
                continue
            for i, j in itertools.permutations(range(size), 2):
                interior = [combo[k] for k in range(size) if k not in (i, j)]
                seq = (combo[i], *interior, combo[j])
                ids = tuple(e.id for e in seq)
                if _strictly_increasing(ids):
                    continue
                if not validate_cycle(seq, relaxed=True):
                    found.append(ids)
    return found


def candidates_by_walks(edges) -> set:
    """Independent enumerator: depth-first walks over later edges, strict order only."""
    out_of = {}
    for e in edges:
        out_of.setdefault(e.src, []).append(e)
    found = set()

    def walk(path):
        last = path[-1]
        if last.dst == path[0].src and not validate_cycle(path):
            found.add(tuple(e.id for e in path))
        for nxt in out_of.get(last.dst, ()):
            if nxt.id > last.id:
                walk(path + [nxt])

    for e in edges:
        walk([e])
    return found


@dataclass
class OracleCycle:
    edge_ids: tuple
    anchor: str
    flow_factor: Fraction
    profit: Fraction
    flows: tuple
    relaxed: bool = False


def _settle(seq, residual) -> OracleCycle | None:
    if any(residual[e.id] <= 0 for e in seq):
        return None
    # value carried by each edge per unit sent on the first edge
    gain = [Fraction(1)]
    for x, y in zip(seq, seq[1:]):
        gain.append(gain[-1] * (Fraction(y.capacity, x.capacity) if _partners(x, y) else 1))
    start = residual[seq[0].id]
    f = min(residual[e.id] / (start * g) for e, g in zip(seq, gain))
    f = min(f, Fraction(1))
    flows = tuple(f * start * g for g in gain)
    for e, x in zip(seq, flows):
        residual[e.id] -= x
    return OracleCycle(tuple(e.id for e in seq), seq[0].src, f, flows[-1] - flows[0], flows)


def brute_force_cycles(graph, max_edges: int = DEFAULT_MAX_EDGES, relaxed: bool = False) -> list:
    """Settled cycles in the same eager order the incremental detector uses.

    Strict cycles are consumed by increasing closing edge, then first edge,
    then full id tuple. With ``relaxed`` the remaining out-of-order cycles are
    consumed afterwards in id-tuple order.
    """
    edges = sorted(graph.edges.values(), key=lambda e: e.id)
    if len(edges) > max_edges:
        raise OracleRefused(f"{len(edges)} edges exceeds oracle bound {max_edges}")
    by_id = {e.id: e for e in edges}
    residual = {e.id: Fraction(e.residual) for e in edges}
    found = candidates_by_subsets(edges, relaxed)
    strict = sorted((c for c in found if _strictly_increasing(c)), key=lambda c: (c[-1], c[0], c))
    loose = sorted(c for c in found if not _strictly_increasing(c))
    out = []
    for ids in strict:
        hit = _settle([by_id[i] for i in ids], residual)
        if hit is not None:
            out.append(hit)
    for ids in loose:
        hit = _settle([by_id[i] for i in ids], residual)
        if hit is not None:
            hit.relaxed = True
            out.append(hit)
    return out


def swap_hops(graph) -> list:
    """(input leg, output leg) pairs; legs are expected to sit next to each other."""
    hops = []
    for a_id, b_id in graph.swap_classes.values():
        a, b = graph.edges.get(a_id), graph.edges.get(b_id)
        if a is None or b is None:
            continue
        hops.append((a, b))
    hops.sort(key=lambda h: h[0].id)
    return hops


def hop_cycle_exists(graph) -> bool:
    """Polynomial check for any strictly ordered cycle built from whole swaps.

    Earliest-arrival reachability over (node, currency) states, started from
    every swap. Exact when every swap's legs are adjacent in global order and
    converts between two different currencies, which the generator guarantees.
    """
    hops = swap_hops(graph)
    for i, (s_in, s_out) in enumerate(hops):
        target = (s_in.src, s_in.currency)
        arrival = {(s_out.dst, s_out.currency): s_out.id}
        if (s_out.dst, s_out.currency) == target:
            return True
        for h_in, h_out in hops[i + 1 :]:
            t = arrival.get((h_in.src, h_in.currency))
            if t is None or t >= h_in.id:
                continue
            state = (h_out.dst, h_out.currency)
            if state == target:
                return True
            if state not in arrival or arrival[state] > h_out.id:
                arrival[state] = h_out.id
    return False
