"""MEV category, miner compensation and miner-driven classification."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from .model import BlockRecord, Origin, Privacy
from .settlement import MevExtraction


class MevCategory(str, enum.Enum):
    ARBITRAGE = "arbitrage"
    BACKRUN = "backrun"
    SANDWICH = "sandwich"


class DriverClass(str, enum.Enum):
    MINER_DRIVEN = "miner_driven"
    BOT_DRIVEN = "bot_driven"
    INDETERMINATE = "indeterminate"


DEFAULT_DRIVER_THRESHOLD = Fraction(95, 100)


def categorize_mev(extraction: MevExtraction) -> MevCategory:
    if len(extraction.tx_indices) >= 2:
        return MevCategory.SANDWICH
    if len(extraction.currencies) == 2:
        return MevCategory.BACKRUN
    return MevCategory.ARBITRAGE


@dataclass
class MinerCompensation:
    tips_eth: Fraction
    direct_transfers_eth: Fraction
    burnt_fees_eth: Fraction
    gross_eth: Fraction

    @property
    def total_eth(self) -> Fraction:
        return self.tips_eth + self.direct_transfers_eth

    @property
    def share_of_gross(self) -> Optional[Fraction]:
        """Miner total over gross profit; None when gross profit is not positive."""
        if self.gross_eth <= 0:
            return None
        return self.total_eth / self.gross_eth


def miner_compensation(extraction: MevExtraction, block: BlockRecord) -> MinerCompensation:
    """Tips, burnt fees and in-transaction native payments to the coinbase.

    A log transfer counts as a direct payment when it moves native currency to
    the block's miner from a node on the extraction's cycles or from the
    sender of a member transaction.
    """
    members = set(extraction.tx_indices)
    payers = set()
    for c in extraction.cycles:
        payers |= c.nodes
    payers.discard(block.miner)
    tips = burnt = direct = 0
    for tx in block.transactions:
        if tx.tx_index not in members:
            continue
        senders = payers | {tx.sender}
        for t in tx.transfers:
            if t.origin is Origin.SYNTHETIC_TIP:
                tips += t.amount
            elif t.origin is Origin.SYNTHETIC_BURN:
                burnt += t.amount
            elif t.currency.is_native and t.receiver == block.miner and t.sender in senders and t.sender != block.miner:
                direct += t.amount
    return MinerCompensation(Fraction(tips), Fraction(direct), Fraction(burnt), extraction.gross_profit_eth)


def classify_driver(comp: MinerCompensation, threshold: Fraction = DEFAULT_DRIVER_THRESHOLD) -> DriverClass:
    share = comp.share_of_gross
    if share is None:
        return DriverClass.INDETERMINATE
    return DriverClass.MINER_DRIVEN if share > threshold else DriverClass.BOT_DRIVEN


def classify_extraction(extraction: MevExtraction, block: BlockRecord, threshold: Fraction = DEFAULT_DRIVER_THRESHOLD) -> MevExtraction:
    """Fill category, fee breakdown, driver class and privacy fields in place."""
    comp = miner_compensation(extraction, block)
    extraction.category = categorize_mev(extraction).value
    extraction.miner_tip_eth = comp.tips_eth
    extraction.miner_transfer_eth = comp.direct_transfers_eth
    extraction.burnt_fees_eth = comp.burnt_fees_eth
    extraction.net_bot_profit_eth = (
        extraction.gross_profit_eth - comp.burnt_fees_eth - comp.tips_eth - comp.direct_transfers_eth
    )
    extraction.miner_share = comp.share_of_gross
    extraction.driver = classify_driver(comp, threshold).value
    members = [tx for tx in block.transactions if tx.tx_index in set(extraction.tx_indices)]
    if members:
        private = sum(1 for tx in members if tx.privacy is Privacy.PRIVATE)
        extraction.privacy_share = Fraction(private, len(members))
        extraction.relay_tagged = any(tx.relay_bundle is not None for tx in members)
    return extraction
