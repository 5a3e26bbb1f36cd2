"""Run aggregation and deterministic report emission.

Amounts are carried as exact wei rationals until rendering. Every amount is
written twice: ``*_eth`` as an 18-digit decimal string and ``*_wei`` as an
exact ``n`` or ``n/d`` ratio, so reports round-trip without loss.
"""

from __future__ import annotations

import json
import os
import tempfile
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Optional

from .ingest import categorize_tx
from .model import WEI_PER_ETH, Origin, Privacy, TxCategory, eth_str, fixed_decimal, ratio_str

PROFIT_BIN_EDGES_WEI = tuple(Fraction(WEI_PER_ETH) * Fraction(x) for x in (0, Fraction(1, 100), Fraction(1, 10), 1, 10, 100))
SHARE_BIN_EDGES = tuple(Fraction(k, 20) for k in range(21))
CATEGORIES = ("arbitrage", "backrun", "sandwich")
DRIVERS = ("miner_driven", "bot_driven", "indeterminate")
FORMATS = ("structured", "tabular")


def _amount(prefix: str, wei) -> dict:
    return {f"{prefix}_eth": eth_str(wei), f"{prefix}_wei": ratio_str(wei)}


def _opt_ratio(x) -> Optional[str]:
    return None if x is None else ratio_str(x)


def _fraction(num, den) -> Optional[Fraction]:
    return None if den == 0 else Fraction(num) / den


# --------------------------------------------------------------------------
# per-miner statistics


@dataclass
class MinerStats:
    miner: str
    blocks: int = 0
    covered_txs: int = 0
    private_txs: int = 0
    tip_income_eth: Fraction = Fraction(0)
    transfer_income_eth: Fraction = Fraction(0)
    mev_income_eth: Fraction = Fraction(0)
    defi_income_eth: Fraction = Fraction(0)
    miner_driven_eth: Fraction = Fraction(0)
    bot_driven_eth: Fraction = Fraction(0)
    indeterminate_eth: Fraction = Fraction(0)

    @property
    def total_income_eth(self) -> Fraction:
        return self.tip_income_eth + self.transfer_income_eth

    @property
    def private_tx_fraction(self) -> Optional[Fraction]:
        return _fraction(self.private_txs, self.covered_txs)

    @property
    def mev_income_fraction(self) -> Optional[Fraction]:
        return _fraction(self.mev_income_eth, self.total_income_eth)

    @property
    def mev_defi_fraction(self) -> Optional[Fraction]:
        return _fraction(self.mev_income_eth, self.defi_income_eth)

    def to_json(self) -> dict:
        out = {
            "miner": self.miner,
            "blocks": self.blocks,
            "covered_txs": self.covered_txs,
            "private_txs": self.private_txs,
            "private_tx_fraction": _opt_ratio(self.private_tx_fraction),
            "mev_income_fraction": _opt_ratio(self.mev_income_fraction),
            "mev_defi_fraction": _opt_ratio(self.mev_defi_fraction),
        }
        for name in ("tip_income", "transfer_income", "mev_income", "defi_income", "miner_driven", "bot_driven", "indeterminate"):
            out.update(_amount(name, getattr(self, name + "_eth")))
        return out


def _direct_income(tx, miner) -> int:
    return sum(
        t.amount
        for t in tx.transfers
        if t.origin is Origin.LOG and t.currency.is_native and t.receiver == miner and t.sender != miner
    )


def aggregate_miner_stats(extractions, blocks) -> list:
    """Per-miner income breakdown, ordered by MEV income (descending) then address.

    ``blocks`` are prepared block records (fee edges and privacy tags applied).
    Direct transfers to the miner in transactions outside any extraction are
    counted as transfer income, never as MEV income.
    """
    stats = {}
    for block in blocks:
        s = stats.setdefault(str(block.miner), MinerStats(str(block.miner)))
        s.blocks += 1
        for tx in block.transactions:
            if tx.privacy is not Privacy.UNKNOWN:
                s.covered_txs += 1
                s.private_txs += tx.privacy is Privacy.PRIVATE
            direct = _direct_income(tx, block.miner)
            s.tip_income_eth += tx.gas_tip_paid
            s.transfer_income_eth += direct
            if categorize_tx(tx, block) is TxCategory.DEFI:
                s.defi_income_eth += tx.gas_tip_paid + direct
    miner_of = {b.number: str(b.miner) for b in blocks}
    for ex in extractions:
        s = stats[miner_of[ex.block_number]]
        income = ex.miner_tip_eth + ex.miner_transfer_eth
        s.mev_income_eth += income
        attr = {"miner_driven": "miner_driven_eth", "bot_driven": "bot_driven_eth"}.get(ex.driver, "indeterminate_eth")
        setattr(s, attr, getattr(s, attr) + income)
    return sorted(stats.values(), key=lambda s: (-s.mev_income_eth, s.miner))


# --------------------------------------------------------------------------
# histograms and treemap


def profit_histogram(extractions) -> dict:
    """Gross profit counts over half-open ETH bins; losses and overflow kept apart."""
    edges = PROFIT_BIN_EDGES_WEI
    counts = [0] * (len(edges) - 1)
    loss = overflow = 0
    for ex in extractions:
        g = ex.gross_profit_eth
        if g < 0:
            loss += 1
        elif g >= edges[-1]:
            overflow += 1
        else:
            k = max(i for i in range(len(edges) - 1) if edges[i] <= g)
            counts[k] += 1
    return {
        "unit": "ETH",
        "edges": [eth_str(e) for e in edges],
        "counts": counts,
        "loss": loss,
        "overflow": overflow,
    }


def miner_share_histogram(extractions) -> dict:
    """Miner share of gross in 5% bins; the last bin is closed at 1.

    Extractions without positive gross have no share and are counted in
    ``loss`` (negative gross) or ``zero_gross``.
    """
    edges = SHARE_BIN_EDGES
    bins = len(edges) - 1
    counts = [0] * bins
    loss = zero = overflow = 0
    for ex in extractions:
        g = ex.gross_profit_eth
        if g < 0:
            loss += 1
            continue
        if g == 0:
            zero += 1
            continue
        share = (ex.miner_tip_eth + ex.miner_transfer_eth) / g
        if share > 1:
            overflow += 1
        else:
            counts[min(int(share * bins), bins - 1)] += 1
    return {
        "edges": [ratio_str(e) for e in edges],
        "counts": counts,
        "loss": loss,
        "zero_gross": zero,
        "overflow": overflow,
    }


def treemap_records(extractions, miner_of: dict) -> list:
    """Address-to-earnings records: miners by MEV income, beneficiaries by net profit."""
    earned = defaultdict(Fraction)
    for ex in extractions:
        earned[(miner_of[ex.block_number], "miner")] += ex.miner_tip_eth + ex.miner_transfer_eth
        earned[(str(ex.beneficiary), "beneficiary")] += ex.net_bot_profit_eth
    rows = sorted(earned.items(), key=lambda kv: (-kv[1], kv[0]))
    return [{"address": a, "role": r, **_amount("earnings", v)} for (a, r), v in rows]


# --------------------------------------------------------------------------
# run report


def extraction_record(ex) -> dict:
    out = {
        "block": ex.block_number,
        "beneficiary": str(ex.beneficiary),
        "tx_indices": list(ex.tx_indices),
        "category": ex.category,
        "driver": ex.driver,
        "miner_share": _opt_ratio(ex.miner_share),
        "miner_share_decimal": None if ex.miner_share is None else fixed_decimal(ex.miner_share, 1, 6),
        "privacy_share": _opt_ratio(ex.privacy_share),
        "relay_tagged": ex.relay_tagged,
        "valuation_partial": ex.valuation_partial,
        "unvalued": {c.label(): ratio_str(v) for c, v in sorted(ex.unvalued.items(), key=lambda kv: kv[0].sort_key())},
        "anchor_deltas": {c.label(): ratio_str(v) for c, v in sorted(ex.anchor_deltas.items(), key=lambda kv: kv[0].sort_key())},
        "cycles": [
            {
                "edge_ids": list(c.edge_ids),
                "anchor_currency": c.anchor_currency.label(),
                "flow_factor": ratio_str(c.flow_factor),
                "profit": ratio_str(c.profit),
                "flows": [ratio_str(x) for x in c.flows],
                "relaxed": c.relaxed,
            }
            for c in ex.cycles
        ],
    }
    for name, v in (
        ("gross_profit", ex.gross_profit_eth),
        ("net_bot_profit", ex.net_bot_profit_eth),
        ("burnt_fees", ex.burnt_fees_eth),
        ("miner_tip", ex.miner_tip_eth),
        ("miner_transfer", ex.miner_transfer_eth),
    ):
        out.update(_amount(name, v))
    return out


def _ranges(numbers) -> list:
    out = []
    for n in sorted(numbers):
        if out and out[-1][1] == n - 1:
            out[-1][1] = n
        else:
            out.append([n, n])
    return out


def block_record(res) -> dict:
    b = res.block
    covered = [tx for tx in b.transactions if tx.privacy is not Privacy.UNKNOWN]
    private = sum(tx.privacy is Privacy.PRIVATE for tx in covered)
    return {
        "block": b.number,
        "miner": str(b.miner),
        "timestamp": b.timestamp,
        "tx_count": len(b.transactions),
        "transfer_count": sum(len(tx.log_transfers()) for tx in b.transactions),
        "extraction_count": len(res.extractions),
        "private_tx_fraction": _opt_ratio(_fraction(private, len(covered))),
        "uncovered": res.uncovered,
        "incomplete": b.incomplete,
        "fees_available": b.fees_available,
        "evictions": res.evictions,
        "warnings": list(b.warnings),
        "risk": res.risk.to_json(),
    }


def _category_breakdown(results) -> dict:
    table = {c.value: {"count": 0, "private": 0, "public": 0, "unknown": 0, "relay": 0, "in_extraction": 0} for c in TxCategory}
    for res in results:
        mev = {i for ex in res.extractions for i in ex.tx_indices}
        for tx in res.block.transactions:
            row = table[res.tx_categories[tx.tx_index].value]
            row["count"] += 1
            row[tx.privacy.value] += 1
            row["relay"] += tx.relay_bundle is not None
            row["in_extraction"] += tx.tx_index in mev
    return table


def _totals(extractions) -> dict:
    gross = sum((ex.gross_profit_eth for ex in extractions), Fraction(0))
    out = {"extraction_count": len(extractions)}
    out.update(_amount("gross_profit", gross))
    out.update(_amount("net_bot_profit", sum((ex.net_bot_profit_eth for ex in extractions), Fraction(0))))
    out.update(_amount("burnt_fees", sum((ex.burnt_fees_eth for ex in extractions), Fraction(0))))
    out.update(_amount("miner_income", sum((ex.miner_tip_eth + ex.miner_transfer_eth for ex in extractions), Fraction(0))))
    per_cat = {}
    for cat in CATEGORIES:
        members = [ex for ex in extractions if ex.category == cat]
        g = sum((ex.gross_profit_eth for ex in members), Fraction(0))
        row = {
            "count": len(members),
            "count_share": _opt_ratio(_fraction(len(members), len(extractions))),
            "gross_share": _opt_ratio(_fraction(g, gross)) if gross > 0 else None,
        }
        row.update(_amount("gross_profit", g))
        per_cat[cat] = row
    out["categories"] = per_cat
    out["drivers"] = {d: sum(ex.driver == d for ex in extractions) for d in DRIVERS}
    out["valuation_partial"] = sum(ex.valuation_partial for ex in extractions)
    return out


def build_report(result, config=None) -> dict:
    """Assemble the JSON-ready run report from a pipeline result."""
    extractions = result.extractions
    blocks = [r.block for r in result.blocks]
    miner_of = {b.number: str(b.miner) for b in blocks}
    settings = {}
    if config is not None:
        settings = {
            "driver_threshold": ratio_str(config.driver_threshold),
            "fork_multiplier": ratio_str(config.fork_multiplier),
            "static_reward_wei": None if config.static_reward is None else str(config.static_reward),
            "payout_addresses": sorted(str(a) for a in config.payout_addresses),
            "relaxed_endpoints": config.detector.relaxed_endpoints,
            "max_paths_per_node": _cap(config.detector.prune.max_paths_per_node),
            "max_path_length": _cap(config.detector.prune.max_len),
        }
    return {
        "amount_unit": "ETH",
        "settings": settings,
        "totals": _totals(extractions),
        "profit_histogram": profit_histogram(extractions),
        "miner_share_histogram": miner_share_histogram(extractions),
        "treemap": treemap_records(extractions, miner_of),
        "miners": [m.to_json() for m in aggregate_miner_stats(extractions, blocks)],
        "tx_categories": _category_breakdown(result.blocks),
        "data_gaps": {
            "gaps": [[a, b] for a, b in sorted(result.gaps)],
            "uncovered_blocks": _ranges(r.block.number for r in result.blocks if r.uncovered),
            "covered_block_count": sum(not r.uncovered for r in result.blocks),
            "incomplete_blocks": [r.block.number for r in result.blocks if r.block.incomplete],
            "fee_unavailable_blocks": [r.block.number for r in result.blocks if not r.block.fees_available],
            "evictions": result.evictions,
            "partial": result.partial,
        },
        "invariant_violations": list(result.violations),
        "blocks": [block_record(r) for r in result.blocks],
        "extractions": [extraction_record(ex) for ex in extractions],
    }


def _cap(x):
    return None if x == float("inf") else int(x)


# --------------------------------------------------------------------------
# emission


def canonical_dumps(obj, indent=None) -> str:
    if indent is None:
        return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)
    return json.dumps(obj, sort_keys=True, indent=indent, ensure_ascii=True)


def atomic_write(path: Path, data: bytes) -> None:
    """Write via a sibling temp file and rename, so readers never see partial output."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix="." + path.name, dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _jsonl(rows) -> bytes:
    return "".join(canonical_dumps(r) + "\n" for r in rows).encode("ascii")


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (list, tuple)):
        return ",".join(_cell(x) for x in v)
    if isinstance(v, dict):
        return canonical_dumps(v)
    return str(v).replace("\t", " ").replace("\n", " ")


def _tsv(columns, rows) -> bytes:
    lines = ["\t".join(columns)]
    lines += ["\t".join(_cell(r.get(c)) for c in columns) for r in rows]
    return ("\n".join(lines) + "\n").encode("ascii")


EXTRACTION_COLUMNS = (
    "block", "beneficiary", "tx_indices", "category", "driver",
    "gross_profit_eth", "net_bot_profit_eth", "burnt_fees_eth", "miner_tip_eth", "miner_transfer_eth",
    "miner_share", "privacy_share", "relay_tagged", "valuation_partial", "gross_profit_wei",
)
BLOCK_COLUMNS = (
    "block", "miner", "timestamp", "tx_count", "transfer_count", "extraction_count", "private_tx_fraction",
    "uncovered", "incomplete", "fees_available", "evictions",
    "block_reward_wei", "miner_mev_income_wei", "total_mev_profit_wei", "fee_fork_viable", "replace_fork_viable",
)
MINER_COLUMNS = (
    "miner", "blocks", "private_tx_fraction", "tip_income_eth", "transfer_income_eth", "mev_income_eth",
    "mev_income_fraction", "defi_income_eth", "mev_defi_fraction", "miner_driven_eth", "bot_driven_eth", "indeterminate_eth",
)


def _flat_block(rec: dict) -> dict:
    out = dict(rec)
    out.update(rec["risk"])
    return out


def _summary_rows(report: dict) -> list:
    t = report["totals"]
    rows = [{"key": k, "value": t[k]} for k in sorted(t) if not isinstance(t[k], dict)]
    for cat, row in sorted(t["categories"].items()):
        rows += [{"key": f"{cat}.{k}", "value": row[k]} for k in sorted(row)]
    for d, n in sorted(t["drivers"].items()):
        rows.append({"key": f"driver.{d}", "value": n})
    gaps = report["data_gaps"]
    rows += [{"key": f"data_gaps.{k}", "value": gaps[k]} for k in sorted(gaps)]
    return rows


def emit_report(report: dict, out_dir, fmt: str = "structured") -> list:
    """Write the report in ``structured`` (JSON) or ``tabular`` (TSV) form; returns paths."""
    if fmt not in FORMATS:
        raise ValueError(f"unknown report format {fmt!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if fmt == "structured":
        files = {
            "report.json": (canonical_dumps(report, indent=2) + "\n").encode("ascii"),
            "extractions.jsonl": _jsonl(report["extractions"]),
            "blocks.jsonl": _jsonl(report["blocks"]),
        }
    else:
        files = {
            "extractions.tsv": _tsv(EXTRACTION_COLUMNS, report["extractions"]),
            "blocks.tsv": _tsv(BLOCK_COLUMNS, [_flat_block(b) for b in report["blocks"]]),
            "miners.tsv": _tsv(MINER_COLUMNS, report["miners"]),
            "summary.tsv": _tsv(("key", "value"), _summary_rows(report)),
        }
    paths = []
    for name in sorted(files):
        atomic_write(out / name, files[name])
        paths.append(out / name)
    return paths


def load_report(path) -> dict:
    with open(path, "r", encoding="ascii") as fh:
        return json.load(fh)
