"""End-to-end run: ingest, graph, detect and settle, classify, assess risk.

Per-block detection is independent and can run in worker processes. Rate
tables, valuation and everything downstream are folded in block order in the
parent, so results do not depend on the worker count.
"""

from __future__ import annotations

from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .classifier import DEFAULT_DRIVER_THRESHOLD, classify_extraction
from .detector import DetectorConfig, detect_cycles
from .graph import build_graph, coalesce_edges
from .ingest import MempoolCapture, categorize_tx, prepare_block
from .model import BlockRecord, Privacy
from .risk import DEFAULT_FORK_MULTIPLIER, assess_block
from .settlement import RateTable, coalesce_cycles
from .synth.oracle import validate_cycle

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_PARTIAL = 3
EXIT_INVARIANT = 4


@dataclass
class PipelineConfig:
    static_reward: Optional[int] = None  # wei; None keeps each block's own value
    driver_threshold: Fraction = DEFAULT_DRIVER_THRESHOLD
    fork_multiplier: Fraction = DEFAULT_FORK_MULTIPLIER
    payout_addresses: frozenset = frozenset()
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    coalesce: bool = True
    workers: int = 1
    hash_rates: Optional[dict] = None


@dataclass
class BlockOutcome:
    block: BlockRecord
    cycles: list
    rates: RateTable
    evictions: int
    violations: list


@dataclass
class BlockResult:
    block: BlockRecord
    extractions: list
    risk: object
    tx_categories: dict  # tx_index -> TxCategory
    evictions: int
    uncovered: bool


@dataclass
class PipelineResult:
    blocks: list  # BlockResult, ascending block number
    gaps: list
    violations: list

    @property
    def extractions(self) -> list:
        return [ex for b in self.blocks for ex in b.extractions]

    @property
    def evictions(self) -> int:
        return sum(b.evictions for b in self.blocks)

    @property
    def partial(self) -> bool:
        return any(b.evictions or b.uncovered or b.block.incomplete for b in self.blocks)

    @property
    def exit_code(self) -> int:
        if self.violations:
            return EXIT_INVARIANT
        return EXIT_PARTIAL if self.partial else EXIT_OK


def cycle_violations(cycle, edges: dict) -> list:
    """Independent re-check of an emitted cycle: constraints, flows and zero-sum deltas."""
    seq = [edges[i] for i in cycle.edge_ids]
    bad = [f"cycle {cycle.edge_ids}: {name}" for name in validate_cycle(seq, relaxed=cycle.relaxed)]
    per_currency = Counter()
    for (_, cur), v in cycle.deltas.items():
        per_currency[cur] += v
    if any(v != 0 for v in per_currency.values()):
        bad.append("deltas do not sum to zero")
    for e, x in zip(seq, cycle.flows):
        if not 0 < x <= e.capacity:
            bad.append(f"flow on edge {e.id} outside (0, capacity]")
    if not 0 < cycle.flow_factor <= 1:
        bad.append("flow factor outside (0, 1]")
    return bad


def detect_block(block: BlockRecord, detector: DetectorConfig, coalesce: bool = True) -> BlockOutcome:
    """Graph construction, detection and settlement for one prepared block."""
    graph = build_graph(block)
    if coalesce:
        graph = coalesce_edges(graph)
    edges = dict(graph.edges)  # consumption deletes exhausted edges from the graph
    rates = RateTable()
    det = detect_cycles(graph, detector, rates)
    violations = []
    for c in det.cycles:
        violations.extend(f"block {block.number}: {v}" for v in cycle_violations(c, edges))
    return BlockOutcome(block, det.cycles, rates, det.evictions, violations)


def _detect_job(args):
    block, detector, coalesce = args
    return detect_block(block, detector, coalesce)


def _outcomes(blocks, config: PipelineConfig):
    jobs = [(b, config.detector, config.coalesce) for b in blocks]
    if config.workers <= 1 or len(jobs) <= 1:
        return [_detect_job(j) for j in jobs]
    chunk = max(1, len(jobs) // (config.workers * 4))
    with ProcessPoolExecutor(max_workers=config.workers) as pool:
        return list(pool.map(_detect_job, jobs, chunksize=chunk))


def run_pipeline(blocks, pool: Optional[MempoolCapture] = None, bundles: Optional[dict] = None, config: Optional[PipelineConfig] = None) -> PipelineResult:
    """Process parsed blocks end to end. Inputs are copied as needed, never mutated."""
    config = config or PipelineConfig()
    ordered = sorted(blocks, key=lambda b: b.number)
    prepared = [prepare_block(b, pool, bundles) for b in ordered]
    outcomes = _outcomes(prepared, config)

    run_rates = RateTable()
    results = []
    violations = []
    for out in outcomes:
        block = out.block
        violations.extend(out.violations)
        run_rates = run_rates.merge(out.rates)
        extractions = coalesce_cycles(out.cycles, block.number, run_rates)
        for ex in extractions:
            classify_extraction(ex, block, config.driver_threshold)
        risk = assess_block(block, extractions, config.static_reward, config.fork_multiplier, config.hash_rates)
        cats = {tx.tx_index: categorize_tx(tx, block, config.payout_addresses) for tx in block.transactions}
        uncovered = pool is not None and pool.in_gap(block.timestamp)
        results.append(BlockResult(block, extractions, risk, cats, out.evictions, uncovered))
    reconcile = reconciliation(results)
    if reconcile is not None:
        violations.append(reconcile)
    return PipelineResult(results, list(pool.gaps) if pool is not None else [], violations)


def reconciliation(results) -> Optional[str]:
    """Miner income plus bot net plus burnt fees must equal gross, run-wide."""
    gross = miner = net = burnt = Fraction(0)
    for b in results:
        for ex in b.extractions:
            gross += ex.gross_profit_eth
            miner += ex.miner_tip_eth + ex.miner_transfer_eth
            net += ex.net_bot_profit_eth
            burnt += ex.burnt_fees_eth
    if miner + net + burnt != gross:
        return f"reconciliation failed: {miner} + {net} + {burnt} != {gross}"
    return None


def private_share(block: BlockRecord) -> Optional[Fraction]:
    covered = [tx for tx in block.transactions if tx.privacy is not Privacy.UNKNOWN]
    if not covered:
        return None
    return Fraction(sum(tx.privacy is Privacy.PRIVATE for tx in covered), len(covered))
