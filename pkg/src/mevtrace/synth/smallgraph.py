"""Tiny random blocks for exhaustive cross-checks against the brute-force oracle.

A handful of traders and venues share two or three currencies so that swap
cycles (profitable, losing and partially filled) show up often, while plain
transfers and out-of-order swap legs exercise the ingest repairs.
"""

from __future__ import annotations

import hashlib
import random

from ..model import NATIVE, Address, BlockRecord, Currency, TransactionRecord, TransferRecord


def _addr(tag: str) -> Address:
    return Address("0x" + hashlib.sha256(tag.encode()).hexdigest()[:40])


TRADERS = tuple(_addr(f"trader{i}") for i in range(2))
VENUES = tuple(_addr(f"venue{i}") for i in range(3))
TOKENS = (Currency.token(_addr("token0")), Currency.token(_addr("token1")))
MINER = _addr("miner")


def random_small_block(seed: int, max_edges: int = 12, currencies: int = 3) -> BlockRecord:
    """A fee-free block with at most ``max_edges`` transfers, fully determined by ``seed``."""
    rng = random.Random(seed)
    pool = (NATIVE,) + TOKENS[: currencies - 1]
    budget = rng.randint(2, max_edges)
    txs = []
    while budget > 0:
        idx = len(txs)
        trader = rng.choice(TRADERS)
        tx = TransactionRecord(
            hash="0x" + hashlib.sha256(f"small:{seed}:{idx}".encode()).hexdigest(),
            tx_index=idx,
            sender=trader,
            receiver=rng.choice(VENUES),
            has_input_data=True,
            erc20_activity=True,
            erc721_activity=False,
            gas_tip_paid=0,
            gas_used=None,
        )
        legs = rng.randint(1, min(4, budget))
        swap_id = 0
        if legs == 4 and rng.random() < 0.5:
            # round trip through two venues, the usual shape of an arbitrage
            cin, cout = rng.sample(pool, 2)
            v1, v2 = rng.sample(VENUES, 2)
            tx.transfers += [
                TransferRecord(0, idx, trader, v1, cin, rng.randint(1, 200), 0),
                TransferRecord(0, idx, v1, trader, cout, rng.randint(1, 200), 0),
                TransferRecord(0, idx, trader, v2, cout, rng.randint(1, 200), 1),
                TransferRecord(0, idx, v2, trader, cin, rng.randint(1, 200), 1),
            ]
            legs, budget, swap_id = 0, budget - 4, 2
        while legs > 0:
            if legs >= 2 and rng.random() < 0.8:
                venue = rng.choice(VENUES)
                cin, cout = rng.sample(pool, 2)
                recipient = trader if rng.random() < 0.75 else rng.choice(TRADERS)
                pair = [
                    TransferRecord(0, idx, trader, venue, cin, rng.randint(1, 200), swap_id),
                    TransferRecord(0, idx, venue, recipient, cout, rng.randint(1, 200), swap_id),
                ]
                if rng.random() < 0.3:
                    pair.reverse()
                tx.transfers.extend(pair)
                swap_id += 1
                legs -= 2
                budget -= 2
            else:
                src, dst = rng.sample(TRADERS + VENUES, 2)
                tx.transfers.append(TransferRecord(0, idx, src, dst, rng.choice(pool), rng.randint(1, 200)))
                legs -= 1
                budget -= 1
        txs.append(tx)
    block = BlockRecord(seed, 1_600_000_000 + seed, MINER, 2 * 10**18, None, txs)
    block.renumber()
    return block
