"""Block reward and time-bandit fork viability flags."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from .model import BlockRecord, ratio_str

DEFAULT_FORK_MULTIPLIER = Fraction(4)
DEFAULT_HASH_RATE_THRESHOLD = Fraction(1, 10)


@dataclass
class BlockRiskReport:
    block_number: int
    miner: str
    block_reward_eth: Fraction
    miner_mev_income_eth: Fraction
    total_mev_profit_eth: Fraction
    fork_multiplier: Fraction = DEFAULT_FORK_MULTIPLIER
    hash_rate_threshold: Fraction = DEFAULT_HASH_RATE_THRESHOLD
    miner_hash_rate: Optional[Fraction] = None
    fee_fork_viable: bool = False
    replace_fork_viable: bool = False

    @property
    def miner_above_hash_threshold(self) -> Optional[bool]:
        if self.miner_hash_rate is None:
            return None
        return self.miner_hash_rate > self.hash_rate_threshold

    def to_json(self) -> dict:
        return {
            "block": self.block_number,
            "miner": self.miner,
            "block_reward_wei": ratio_str(self.block_reward_eth),
            "miner_mev_income_wei": ratio_str(self.miner_mev_income_eth),
            "total_mev_profit_wei": ratio_str(self.total_mev_profit_eth),
            "fork_multiplier": ratio_str(self.fork_multiplier),
            "hash_rate_threshold": ratio_str(self.hash_rate_threshold),
            "miner_hash_rate": None if self.miner_hash_rate is None else ratio_str(self.miner_hash_rate),
            "miner_above_hash_threshold": self.miner_above_hash_threshold,
            "fee_fork_viable": self.fee_fork_viable,
            "replace_fork_viable": self.replace_fork_viable,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "BlockRiskReport":
        rep = cls(
            block_number=obj["block"],
            miner=obj["miner"],
            block_reward_eth=Fraction(obj["block_reward_wei"]),
            miner_mev_income_eth=Fraction(obj["miner_mev_income_wei"]),
            total_mev_profit_eth=Fraction(obj["total_mev_profit_wei"]),
            fork_multiplier=Fraction(obj["fork_multiplier"]),
            hash_rate_threshold=Fraction(obj["hash_rate_threshold"]),
            miner_hash_rate=None if obj["miner_hash_rate"] is None else Fraction(obj["miner_hash_rate"]),
        )
        return fork_flags(rep)


def mev_tx_indices(extractions) -> set:
    out = set()
    for ex in extractions:
        out.update(ex.tx_indices)
    return out


def block_reward(block: BlockRecord, extractions, static_reward: Optional[int] = None) -> Fraction:
    """Static reward plus the tips of every transaction outside all extractions (wei)."""
    mev = mev_tx_indices(extractions)
    base = block.static_reward if static_reward is None else static_reward
    return Fraction(base + sum(tx.gas_tip_paid for tx in block.transactions if tx.tx_index not in mev))


def fork_flags(report: BlockRiskReport) -> BlockRiskReport:
    limit = report.fork_multiplier * report.block_reward_eth
    report.fee_fork_viable = report.miner_mev_income_eth > limit
    report.replace_fork_viable = report.total_mev_profit_eth > limit
    return report


def assess_block(block: BlockRecord, extractions, static_reward=None, multiplier=DEFAULT_FORK_MULTIPLIER, hash_rates=None) -> BlockRiskReport:
    reward = block_reward(block, extractions, static_reward)
    income = sum((ex.miner_tip_eth + ex.miner_transfer_eth for ex in extractions), Fraction(0))
    total = sum((ex.gross_profit_eth for ex in extractions), Fraction(0))
    rate = None if not hash_rates else hash_rates.get(block.miner)
    rep = BlockRiskReport(
        block_number=block.number,
        miner=str(block.miner),
        block_reward_eth=reward,
        miner_mev_income_eth=income,
        total_mev_profit_eth=total,
        fork_multiplier=Fraction(multiplier),
        miner_hash_rate=None if rate is None else Fraction(rate),
    )
    return fork_flags(rep)
