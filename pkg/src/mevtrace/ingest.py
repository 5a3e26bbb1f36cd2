"""Parsing of block logs, mempool captures and relay bundle indexes.

The block log is newline-delimited JSON, one object per block. Every amount is
a decimal string of base units so values survive at full uint256 precision.
"""

from __future__ import annotations

import copy
import io
import json
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

from .model import (
    BURN_SINK,
    NATIVE,
    Address,
    BlockRecord,
    Currency,
    Origin,
    Privacy,
    TransactionRecord,
    TransferRecord,
    TxCategory,
    parse_amount,
    parse_tx_hash,
)

log = logging.getLogger(__name__)


class ParseError(ValueError):
    def __init__(self, message: str, line: int, column: int = 1, source: str = "<stream>"):
        super().__init__(f"{source}:{line}:{column}: {message}")
        self.line = line
        self.column = column
        self.source = source


def _lines(stream) -> Iterable[str]:
    if isinstance(stream, (bytes, bytearray)):
        stream = io.BytesIO(stream)
    elif isinstance(stream, str):
        stream = io.StringIO(stream)
    for raw in stream:
        if isinstance(raw, (bytes, bytearray)):
            raw = raw.decode("utf-8")
        yield raw.rstrip("\r\n")


# --------------------------------------------------------------------------
# block log


_BLOCK_KEYS = {"number", "timestamp", "miner", "static_reward", "transactions"}
_TX_KEYS = {
    "hash",
    "tx_index",
    "sender",
    "receiver",
    "has_input_data",
    "erc20_activity",
    "erc721_activity",
    "gas_tip_paid",
    "transfers",
}
_TRANSFER_KEYS = {"sender", "receiver", "currency", "amount"}


def _uint(obj, key):
    v = obj[key]
    if not isinstance(v, int) or isinstance(v, bool) or v < 0:
        raise ValueError(f"{key} must be a non-negative integer")
    return v


def _flag(obj, key):
    v = obj[key]
    if not isinstance(v, bool):
        raise ValueError(f"{key} must be a boolean")
    return v


def _require(obj, keys, what):
    if not isinstance(obj, dict):
        raise ValueError(f"{what} must be an object")
    missing = keys - obj.keys()
    if missing:
        raise ValueError(f"{what} missing field(s): {', '.join(sorted(missing))}")


def _decode_block(obj) -> BlockRecord:
    _require(obj, _BLOCK_KEYS, "block")
    base_fee = obj.get("base_fee_per_gas")
    block = BlockRecord(
        number=_uint(obj, "number"),
        timestamp=_uint(obj, "timestamp"),
        miner=Address(obj["miner"]),
        static_reward=parse_amount(obj["static_reward"]),
        base_fee_per_gas=None if base_fee is None else parse_amount(base_fee),
    )
    if not isinstance(obj["transactions"], list):
        raise ValueError("transactions must be a list")
    gi = 0
    for raw_tx in obj["transactions"]:
        _require(raw_tx, _TX_KEYS, "transaction")
        receiver = raw_tx["receiver"]
        gas_used = raw_tx.get("gas_used")
        if gas_used is not None:
            gas_used = _uint(raw_tx, "gas_used")
        tx = TransactionRecord(
            hash=parse_tx_hash(raw_tx["hash"]),
            tx_index=_uint(raw_tx, "tx_index"),
            sender=Address(raw_tx["sender"]),
            receiver=None if receiver is None else Address(receiver),
            has_input_data=_flag(raw_tx, "has_input_data"),
            erc20_activity=_flag(raw_tx, "erc20_activity"),
            erc721_activity=_flag(raw_tx, "erc721_activity"),
            gas_tip_paid=parse_amount(raw_tx["gas_tip_paid"]),
            gas_used=gas_used,
        )
        if not isinstance(raw_tx["transfers"], list):
            raise ValueError("transfers must be a list")
        for raw in raw_tx["transfers"]:
            _require(raw, _TRANSFER_KEYS, "transfer")
            swap_id = raw.get("swap_id")
            if swap_id is not None:
                swap_id = _uint(raw, "swap_id")
            tx.transfers.append(
                TransferRecord(
                    global_index=gi,
                    tx_index=tx.tx_index,
                    sender=Address(raw["sender"]),
                    receiver=Address(raw["receiver"]),
                    currency=Currency.from_json(raw["currency"]),
                    amount=parse_amount(raw["amount"]),
                    swap_id=swap_id,
                )
            )
            gi += 1
        block.transactions.append(tx)
    return block


def _check_block(block: BlockRecord) -> None:
    """Structural checks; raises on hard violations, flags soft ones."""
    seen_idx = set()
    seen_hash = set()
    for tx in block.transactions:
        if tx.tx_index in seen_idx:
            raise ValueError(f"duplicate tx_index {tx.tx_index}")
        if tx.hash in seen_hash:
            raise ValueError(f"duplicate tx hash {tx.hash}")
        seen_idx.add(tx.tx_index)
        seen_hash.add(tx.hash)
    block.transactions.sort(key=lambda t: t.tx_index)
    for tx in block.transactions:
        bad = _strip_malformed_swaps(tx)
        if bad:
            msg = f"tx {tx.tx_index}: swap(s) {bad} do not have exactly two legs"
            block.warnings.append(msg)
            block.incomplete = True
    block.renumber()


def _strip_malformed_swaps(tx: TransactionRecord) -> list:
    counts = Counter(t.swap_id for t in tx.transfers if t.swap_id is not None)
    bad = sorted(s for s, n in counts.items() if n != 2)
    if bad:
        for t in tx.transfers:
            if t.swap_id in bad:
                t.swap_id = None
        tx.malformed_swaps = sorted(set(tx.malformed_swaps) | set(bad))
    return bad


def parse_block_log(stream, source: str = "<stream>") -> list:
    """Parse a block log into BlockRecords sorted by block number.

    Syntax and schema errors raise ParseError carrying line and column. A swap
    group without exactly two legs keeps its transfers as plain edges and flags
    the block incomplete.
    """
    blocks = {}
    for lineno, text in enumerate(_lines(stream), start=1):
        if not text.strip():
            continue
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, lineno, exc.colno, source) from None
        try:
            block = _decode_block(obj)
            _check_block(block)
        except (KeyError, ValueError, TypeError) as exc:
            raise ParseError(str(exc), lineno, 1, source) from None
        if block.number in blocks:
            raise ParseError(f"duplicate block number {block.number}", lineno, 1, source)
        for w in block.warnings:
            log.warning("%s:%d: %s", source, lineno, w)
        blocks[block.number] = block
    return [blocks[n] for n in sorted(blocks)]


def read_block_log(path) -> list:
    with open(path, "rb") as fh:
        return parse_block_log(fh, source=str(path))


def _encode_block(block: BlockRecord) -> dict:
    txs = []
    for tx in block.transactions:
        transfers = []
        for t in tx.log_transfers():
            rec = {
                "sender": str(t.sender),
                "receiver": str(t.receiver),
                "currency": t.currency.to_json(),
                "amount": str(t.amount),
            }
            if t.swap_id is not None:
                rec["swap_id"] = t.swap_id
            transfers.append(rec)
        rec = {
            "hash": tx.hash,
            "tx_index": tx.tx_index,
            "sender": str(tx.sender),
            "receiver": None if tx.receiver is None else str(tx.receiver),
            "has_input_data": tx.has_input_data,
            "erc20_activity": tx.erc20_activity,
            "erc721_activity": tx.erc721_activity,
            "gas_tip_paid": str(tx.gas_tip_paid),
            "transfers": transfers,
        }
        if tx.gas_used is not None:
            rec["gas_used"] = tx.gas_used
        txs.append(rec)
    out = {
        "number": block.number,
        "timestamp": block.timestamp,
        "miner": str(block.miner),
        "static_reward": str(block.static_reward),
        "transactions": txs,
    }
    if block.base_fee_per_gas is not None:
        out["base_fee_per_gas"] = str(block.base_fee_per_gas)
    return out


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def serialize_block_log(blocks) -> bytes:
    """Canonical block log: sorted keys, compact separators, one block per line."""
    return b"".join(
        (canonical_json(_encode_block(b)) + "\n").encode("ascii")
        for b in sorted(blocks, key=lambda b: b.number)
    )


# --------------------------------------------------------------------------
# swap reordering


def _copy_tx(tx: TransactionRecord) -> TransactionRecord:
    return replace(tx, transfers=[copy.copy(t) for t in tx.transfers])


def _input_leg(a: TransferRecord, b: TransferRecord, tx: TransactionRecord, incidence: Counter):
    """Pick which of two swap legs pays into the venue.

    Evidence is tried in order and the first rule that discriminates wins:
    chaining (one leg's receiver is the other's sender), the transaction's own
    endpoints acting as the trader, then the trader being the busier node among
    the transaction's swap legs. With no evidence the log order stands.
    """
    a_in = a.receiver == b.sender
    b_in = b.receiver == a.sender
    if a_in != b_in:
        return a if a_in else b
    trader = {tx.sender, tx.receiver}
    a_tr = a.sender in trader
    b_tr = b.sender in trader
    if a_tr != b_tr:
        return a if a_tr else b
    if incidence[a.sender] != incidence[b.sender]:
        return a if incidence[a.sender] > incidence[b.sender] else b
    return a if a.global_index <= b.global_index else b


def reorder_swap_transfers(tx: TransactionRecord) -> TransactionRecord:
    """Place each swap's input leg immediately before its output leg.

    The pair takes the position of whichever leg came first; every other
    transfer keeps its relative order.
    """
    tx = _copy_tx(tx)
    _strip_malformed_swaps(tx)
    if not tx.transfers:
        return tx
    groups = defaultdict(list)
    for t in tx.transfers:
        if t.swap_id is not None:
            groups[t.swap_id].append(t)
    incidence = Counter()
    for legs in groups.values():
        for t in legs:
            incidence[t.sender] += 1
            incidence[t.receiver] += 1
    base = tx.transfers[0].global_index
    out = []
    placed = set()
    for t in tx.transfers:
        if t.swap_id is None:
            out.append(t)
            continue
        if t.swap_id in placed:
            continue
        a, b = groups[t.swap_id]
        first = _input_leg(a, b, tx, incidence)
        second = b if first is a else a
        out.extend((first, second))
        placed.add(t.swap_id)
    for i, t in enumerate(out):
        t.global_index = base + i
    tx.transfers = out
    return tx


def reorder_block_swaps(block: BlockRecord) -> BlockRecord:
    block = replace(block, transactions=[reorder_swap_transfers(tx) for tx in block.transactions])
    block.renumber()
    return block


# --------------------------------------------------------------------------
# fee edges


def synthesize_fee_edges(block: BlockRecord, base_fee_per_gas=None, gas_used=None) -> BlockRecord:
    """Append a burn edge and, for a positive tip, a miner tip edge to every tx.

    ``base_fee_per_gas`` and ``gas_used`` (a mapping tx_index -> gas) default
    to the values carried by the block record.
    """
    if base_fee_per_gas is None:
        base_fee_per_gas = block.base_fee_per_gas
    if gas_used is None:
        gas_used = {tx.tx_index: tx.gas_used for tx in block.transactions}
    txs = []
    missing = base_fee_per_gas is None
    for tx in block.transactions:
        tx = replace(tx, transfers=[copy.copy(t) for t in tx.transfers if t.origin is Origin.LOG])
        gas = gas_used.get(tx.tx_index)
        if base_fee_per_gas is None or gas is None:
            missing = True
        else:
            tx.burnt_fee = base_fee_per_gas * gas
            tx.transfers.append(
                TransferRecord(0, tx.tx_index, tx.sender, BURN_SINK, NATIVE, tx.burnt_fee, None, Origin.SYNTHETIC_BURN)
            )
        if tx.gas_tip_paid > 0:
            tx.transfers.append(
                TransferRecord(0, tx.tx_index, tx.sender, block.miner, NATIVE, tx.gas_tip_paid, None, Origin.SYNTHETIC_TIP)
            )
        txs.append(tx)
    block = replace(block, transactions=txs, warnings=list(block.warnings))
    if missing:
        msg = f"block {block.number}: fee fields missing, burnt-fee metrics unavailable"
        log.warning(msg)
        block.warnings.append(msg)
        block.fees_available = False
    block.renumber()
    return block


# --------------------------------------------------------------------------
# mempool captures and privacy


@dataclass
class MempoolCapture:
    entries: dict = field(default_factory=dict)
    gaps: list = field(default_factory=list)

    def add(self, tx_hash: str, first_seen: int) -> None:
        prev = self.entries.get(tx_hash)
        if prev is None or first_seen < prev:
            self.entries[tx_hash] = first_seen

    def in_gap(self, timestamp: int) -> bool:
        return any(start <= timestamp <= end for start, end in self.gaps)


def parse_mempool(stream, source: str = "<stream>") -> MempoolCapture:
    """Read ``unix_seconds<TAB>tx_hash`` lines plus ``#gap <start> <end>`` headers."""
    cap = MempoolCapture()
    for lineno, text in enumerate(_lines(stream), start=1):
        if not text.strip():
            continue
        if text.startswith("#"):
            parts = text[1:].split()
            if parts and parts[0] == "gap":
                try:
                    start, end = int(parts[1]), int(parts[2])
                except (IndexError, ValueError):
                    raise ParseError("malformed #gap header", lineno, 1, source) from None
                if end < start:
                    raise ParseError("gap ends before it starts", lineno, 1, source)
                cap.gaps.append((start, end))
            continue
        parts = text.split("\t")
        if len(parts) != 2:
            raise ParseError("expected unix_seconds<TAB>tx_hash", lineno, 1, source)
        try:
            ts = int(parts[0])
            if ts < 0:
                raise ValueError
        except ValueError:
            raise ParseError(f"bad timestamp {parts[0]!r}", lineno, 1, source) from None
        try:
            h = parse_tx_hash(parts[1])
        except ValueError as exc:
            raise ParseError(str(exc), lineno, len(parts[0]) + 2, source) from None
        cap.add(h, ts)
    cap.gaps.sort()
    return cap


def read_mempool(path) -> MempoolCapture:
    with open(path, "rb") as fh:
        return parse_mempool(fh, source=str(path))


def tag_privacy(block: BlockRecord, pool: MempoolCapture) -> BlockRecord:
    gap = pool.in_gap(block.timestamp)
    txs = []
    for tx in block.transactions:
        seen = pool.entries.get(tx.hash)
        if seen is not None and seen <= block.timestamp:
            privacy = Privacy.PUBLIC
        elif gap:
            privacy = Privacy.UNKNOWN
        else:
            privacy = Privacy.PRIVATE
        txs.append(replace(tx, privacy=privacy))
    return replace(block, transactions=txs)


# --------------------------------------------------------------------------
# relay bundles


def parse_bundles(stream, source: str = "<stream>") -> dict:
    """Read ``block<TAB>bundle_id<TAB>tx_hash`` lines into {block: {hash: bundle_id}}."""
    index = defaultdict(dict)
    for lineno, text in enumerate(_lines(stream), start=1):
        if not text.strip() or text.startswith("#"):
            continue
        parts = text.split("\t")
        if len(parts) != 3:
            raise ParseError("expected block<TAB>bundle_id<TAB>tx_hash", lineno, 1, source)
        try:
            number = int(parts[0])
            if number < 0:
                raise ValueError
        except ValueError:
            raise ParseError(f"bad block number {parts[0]!r}", lineno, 1, source) from None
        if not parts[1]:
            raise ParseError("empty bundle id", lineno, len(parts[0]) + 2, source)
        try:
            h = parse_tx_hash(parts[2])
        except ValueError as exc:
            raise ParseError(str(exc), lineno, len(parts[0]) + len(parts[1]) + 3, source) from None
        index[number][h] = parts[1]
    return dict(index)


def read_bundles(path) -> dict:
    with open(path, "rb") as fh:
        return parse_bundles(fh, source=str(path))


def tag_relay_bundles(block: BlockRecord, bundles: dict) -> BlockRecord:
    members = bundles.get(block.number)
    if not members:
        return block
    block = replace(block, warnings=list(block.warnings))
    known = {tx.hash for tx in block.transactions}
    for h in sorted(set(members) - known):
        msg = f"block {block.number}: bundle {members[h]} references unknown tx {h}"
        log.warning(msg)
        block.warnings.append(msg)
    block.transactions = [
        replace(tx, relay_bundle=members[tx.hash]) if tx.hash in members else tx
        for tx in block.transactions
    ]
    return block


# --------------------------------------------------------------------------
# transaction categories


def categorize_tx(tx: TransactionRecord, block: BlockRecord, payout_addresses=frozenset()) -> TxCategory:
    if tx.erc20_activity:
        return TxCategory.DEFI
    if tx.erc721_activity:
        return TxCategory.NFT
    plain = tx.receiver is not None and not tx.has_input_data
    if plain and (tx.sender == block.miner or tx.sender in payout_addresses):
        return TxCategory.MINER_PAYMENT
    if plain:
        return TxCategory.PLAIN_TRANSFER
    return TxCategory.UNKNOWN


def prepare_block(block: BlockRecord, pool: Optional[MempoolCapture] = None, bundles: Optional[dict] = None) -> BlockRecord:
    """Run the per-block ingest chain: swap reordering, fee edges, tagging."""
    block = reorder_block_swaps(block)
    block = synthesize_fee_edges(block)
    if pool is not None:
        block = tag_privacy(block, pool)
    if bundles:
        block = tag_relay_bundles(block, bundles)
    return block
