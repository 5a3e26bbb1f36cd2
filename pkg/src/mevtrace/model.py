"""Core value types shared by every stage of the pipeline."""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

MAX_UINT256 = 2**256 - 1
WEI_PER_ETH = 10**18

_HEX40 = re.compile(r"^0x[0-9a-fA-F]{40}$")
_HEX64 = re.compile(r"^0x[0-9a-fA-F]{64}$")


class Address(str):
    """A 20-byte account identifier, always rendered as lowercase hex."""

    __slots__ = ()

    def __new__(cls, value: str) -> "Address":
        if isinstance(value, Address):
            return value
        if not isinstance(value, str) or not _HEX40.match(value):
            raise ValueError(f"not a 20-byte hex address: {value!r}")
        return super().__new__(cls, value.lower())

    @classmethod
    def from_int(cls, n: int) -> "Address":
        return cls("0x%040x" % n)

    def to_bytes(self) -> bytes:
        return bytes.fromhex(self[2:])


def parse_tx_hash(value: str) -> str:
    if not isinstance(value, str) or not _HEX64.match(value):
        raise ValueError(f"not a 32-byte hex hash: {value!r}")
    return value.lower()


BURN_SINK = Address("0x" + "00" * 20)


class CurrencyKind(str, enum.Enum):
    NATIVE = "native"
    TOKEN = "token"
    NFT = "nft"


@dataclass(frozen=True, order=True)
class Currency:
    kind: CurrencyKind
    contract: Optional[Address] = None
    token_id: Optional[int] = None

    def __post_init__(self):
        if self.kind is CurrencyKind.NATIVE:
            if self.contract is not None or self.token_id is not None:
                raise ValueError("native currency carries no contract")
        else:
            if self.contract is None:
                raise ValueError(f"{self.kind.value} currency needs a contract")
            object.__setattr__(self, "contract", Address(self.contract))
            if self.kind is CurrencyKind.NFT:
                if self.token_id is None or not 0 <= self.token_id <= MAX_UINT256:
                    raise ValueError("nft currency needs a uint256 token_id")
            elif self.token_id is not None:
                raise ValueError("token currency carries no token_id")

    @classmethod
    def token(cls, contract: str) -> "Currency":
        return cls(CurrencyKind.TOKEN, Address(contract))

    @classmethod
    def nft(cls, contract: str, token_id: int) -> "Currency":
        return cls(CurrencyKind.NFT, Address(contract), token_id)

    @property
    def is_native(self) -> bool:
        return self.kind is CurrencyKind.NATIVE

    def sort_key(self):
        return (self.kind.value, self.contract or "", self.token_id or 0)

    def label(self) -> str:
        if self.kind is CurrencyKind.NATIVE:
            return "native"
        if self.kind is CurrencyKind.TOKEN:
            return f"token:{self.contract}"
        return f"nft:{self.contract}:{self.token_id}"

    def to_json(self) -> dict:
        out = {"kind": self.kind.value}
        if self.contract is not None:
            out["contract"] = str(self.contract)
        if self.token_id is not None:
            out["token_id"] = str(self.token_id)
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "Currency":
        kind = CurrencyKind(obj["kind"])
        if kind is CurrencyKind.NATIVE:
            if set(obj) - {"kind"}:
                raise ValueError("native currency carries no contract")
            return NATIVE
        token_id = obj.get("token_id")
        if token_id is not None:
            token_id = parse_amount(token_id)
        return cls(kind, Address(obj["contract"]), token_id)

    def __repr__(self):
        return f"Currency({self.label()})"


NATIVE = Currency(CurrencyKind.NATIVE)


def parse_amount(value) -> int:
    """Parse a decimal base-unit string into an exact integer in [0, 2**256)."""
    if not isinstance(value, str) or not value.isdigit() or not value.isascii():
        raise ValueError(f"amount must be a decimal digit string: {value!r}")
    if len(value) > 1 and value[0] == "0":
        raise ValueError(f"amount has leading zeros: {value!r}")
    n = int(value)
    if n > MAX_UINT256:
        raise ValueError(f"amount exceeds uint256: {value}")
    return n


class Origin(str, enum.Enum):
    LOG = "log"
    SYNTHETIC_TIP = "synthetic_tip"
    SYNTHETIC_BURN = "synthetic_burn"


class Privacy(str, enum.Enum):
    PUBLIC = "public"
    PRIVATE = "private"
    UNKNOWN = "unknown"


class TxCategory(str, enum.Enum):
    DEFI = "defi"
    NFT = "nft"
    MINER_PAYMENT = "miner_payment"
    PLAIN_TRANSFER = "plain_transfer"
    UNKNOWN = "unknown"


@dataclass
class TransferRecord:
    global_index: int
    tx_index: int
    sender: Address
    receiver: Address
    currency: Currency
    amount: int
    swap_id: Optional[int] = None
    origin: Origin = Origin.LOG

    @property
    def synthetic(self) -> bool:
        return self.origin is not Origin.LOG


@dataclass
class TransactionRecord:
    hash: str
    tx_index: int
    sender: Address
    receiver: Optional[Address]
    has_input_data: bool
    erc20_activity: bool
    erc721_activity: bool
    gas_tip_paid: int
    gas_used: Optional[int]
    transfers: list = field(default_factory=list)
    burnt_fee: int = 0
    privacy: Privacy = Privacy.UNKNOWN
    relay_bundle: Optional[str] = None
    malformed_swaps: list = field(default_factory=list)

    def log_transfers(self):
        return [t for t in self.transfers if t.origin is Origin.LOG]


@dataclass
class BlockRecord:
    number: int
    timestamp: int
    miner: Address
    static_reward: int
    base_fee_per_gas: Optional[int]
    transactions: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    incomplete: bool = False
    fees_available: bool = True

    def transfers(self):
        for tx in self.transactions:
            yield from tx.transfers

    def renumber(self) -> None:
        """Reassign a contiguous 0-based global_index across the block."""
        i = 0
        for tx in self.transactions:
            for t in tx.transfers:
                t.global_index = i
                i += 1


def ratio_str(x: Fraction) -> str:
    """Exact rendering of a rational: ``"n"`` or ``"n/d"``."""
    x = Fraction(x)
    if x.denominator == 1:
        return str(x.numerator)
    return f"{x.numerator}/{x.denominator}"


def parse_ratio(s: str) -> Fraction:
    return Fraction(s)


def fixed_decimal(x: Fraction, scale: int = WEI_PER_ETH, digits: int = 18) -> str:
    """Render ``x / scale`` with ``digits`` fractional digits, banker's rounding."""
    units = round(Fraction(x) * 10**digits / scale)
    sign = "-" if units < 0 else ""
    units = abs(units)
    whole, frac = divmod(units, 10**digits)
    if digits == 0:
        return f"{sign}{whole}"
    return f"{sign}{whole}.{frac:0{digits}d}"


def eth_str(wei: Fraction) -> str:
    return fixed_decimal(wei, WEI_PER_ETH, 18)


def parse_eth(s: str) -> int:
    """Parse a decimal ETH string (e.g. ``"2"`` or ``"5.92"``) into exact wei."""
    value = Fraction(s) * WEI_PER_ETH
    if value.denominator != 1:
        raise ValueError(f"more than 18 fractional digits: {s}")
    return int(value)
