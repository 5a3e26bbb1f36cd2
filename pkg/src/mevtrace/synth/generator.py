"""Deterministic synthetic corpora with planted, labelled MEV structures.

Every block draws from its own ``random.Random`` seeded by SHA-256 of
``(seed, block number)``, so blocks can be generated independently and the
output is a pure function of the scenario.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from ..model import WEI_PER_ETH, ratio_str

RNG_NAME = "python-random-mt19937"
RNG_VERSION = 1
GWEI = 10**9

STRUCTURES = (
    "sandwich",
    "losing_sandwich",
    "backrun",
    "triangular",
    "suboptimal",
    "double_arbitrage",
    "double_sandwich",
    "worked_example",
    "adversarial",
    "none",
)
PROFIT_STRUCTURES = {
    "sandwich": "sandwich",
    "losing_sandwich": "sandwich",
    "backrun": "backrun",
    "triangular": "arbitrage",
    "suboptimal": "backrun",
    "double_arbitrage": "arbitrage",
    "double_sandwich": "sandwich",
    "worked_example": "backrun",
}


# fixed-fee spikes and the near-total payments seen for miner-controlled bots
MINER_SHARES = tuple(Fraction(p, 1000) for p in (0, 0, 100, 300, 500, 800, 840, 940, 950, 970, 986, 1000))


class ScenarioError(ValueError):
    pass


@dataclass
class ScenarioSpec:
    seed: int = 0
    blocks: int = 1
    first_block: int = 14_000_000
    start_timestamp: int = 1_644_624_000
    block_interval: int = 13
    # explicit per-block structure lists; cycled when shorter than `blocks`
    plan: Optional[list] = None
    # otherwise: weights over STRUCTURES and a per-block count range
    mix: dict = field(default_factory=lambda: {"none": 1})
    structures_per_block: tuple = (0, 1)
    noise_transfers: int = 20
    noise_swaps: int = 3
    private_fraction: float = 0.02
    mev_private_fraction: float = 0.9
    relay_fraction: float = 0.0
    fees: bool = True
    base_fee_gwei: tuple = (10, 120)
    static_reward_wei: int = 2 * WEI_PER_ETH
    payout_txs: int = 0
    direct_payment_probability: float = 0.3
    gap_blocks: list = field(default_factory=list)
    adversarial_layers: int = 14
    tokens_per_block: int = 6
    miners: int = 8

    @classmethod
    def from_json(cls, obj: dict) -> "ScenarioSpec":
        known = set(cls.__dataclass_fields__)
        unknown = set(obj) - known
        if unknown:
            raise ScenarioError(f"unknown scenario field(s): {', '.join(sorted(unknown))}")
        spec = cls(**obj)
        if isinstance(spec.structures_per_block, list):
            spec.structures_per_block = tuple(spec.structures_per_block)
        if isinstance(spec.base_fee_gwei, list):
            spec.base_fee_gwei = tuple(spec.base_fee_gwei)
        spec.validate()
        return spec

    def to_json(self) -> dict:
        out = {}
        for name in self.__dataclass_fields__:
            v = getattr(self, name)
            out[name] = list(v) if isinstance(v, tuple) else v
        return out

    def validate(self) -> None:
        if not 0 <= self.seed < 2**64:
            raise ScenarioError("seed must be an unsigned 64-bit integer")
        if self.blocks < 0:
            raise ScenarioError("blocks must be non-negative")
        if self.miners < 1:
            raise ScenarioError("need at least one miner")
        names = set(self.mix)
        for row in self.plan or []:
            names |= set(row)
        bad = names - set(STRUCTURES)
        if bad:
            raise ScenarioError(f"unknown structure(s): {', '.join(sorted(bad))}")
        lo, hi = self.structures_per_block
        if not 0 <= lo <= hi:
            raise ScenarioError("structures_per_block must be an ordered non-negative range")
        if self.plan is None and hi > 0 and sum(self.mix.values()) <= 0:
            raise ScenarioError("mix weights must be positive")
        if self.tokens_per_block < 3 and names & {"triangular", "double_arbitrage", "double_sandwich"}:
            raise ScenarioError("triangular and double structures need at least three tokens")
        if self.tokens_per_block < 1:
            raise ScenarioError("every MEV structure needs at least one token besides native")
        for name in ("private_fraction", "mev_private_fraction", "relay_fraction", "direct_payment_probability"):
            if not 0 <= getattr(self, name) <= 1:
                raise ScenarioError(f"{name} must lie in [0, 1]")


@dataclass
class Corpus:
    blocks: bytes
    mempool: bytes
    bundles: bytes
    truth: list  # one dict per block
    manifest: dict

    def truth_bytes(self) -> bytes:
        return b"".join((_dumps(t) + "\n").encode("ascii") for t in self.truth)

    def write(self, out_dir) -> dict:
        from pathlib import Path

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "blocks": out / "blocks.jsonl",
            "mempool": out / "mempool.tsv",
            "bundles": out / "bundles.tsv",
            "truth": out / "truth.jsonl",
            "manifest": out / "manifest.json",
        }
        paths["blocks"].write_bytes(self.blocks)
        paths["mempool"].write_bytes(self.mempool)
        paths["bundles"].write_bytes(self.bundles)
        paths["truth"].write_bytes(self.truth_bytes())
        paths["manifest"].write_bytes((_dumps(self.manifest) + "\n").encode("ascii"))
        return paths

    def digest(self) -> str:
        h = hashlib.sha256()
        for part in (self.blocks, self.mempool, self.bundles, self.truth_bytes()):
            h.update(hashlib.sha256(part).digest())
        return h.hexdigest()


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def corpus_miners(seed: int, count: int) -> list:
    """(coinbase, payout address) pairs shared by every block of a corpus."""
    out = []
    for k in range(count):
        h = hashlib.sha256(f"miner:{seed}:{k}".encode()).hexdigest()
        out.append(("0x" + h[:40], "0x" + h[24:64]))
    return out


def block_seed(seed: int, number: int) -> int:
    return int.from_bytes(hashlib.sha256(f"{seed}:{number}".encode()).digest()[:8], "big")


NATIVE_J = {"kind": "native"}


def _token(addr: str) -> dict:
    return {"kind": "token", "contract": addr}


class _Tx:
    def __init__(self, sender, receiver, *, input_data=True, erc20=False, erc721=False, category, gas_used=150_000):
        self.sender = sender
        self.receiver = receiver
        self.input_data = input_data
        self.erc20 = erc20
        self.erc721 = erc721
        self.category = category
        self.gas_used = gas_used
        self.tip = 0
        self.transfers = []  # (sender, receiver, currency json, amount, swap_id)
        self.mev = False
        self.private = False
        self._swaps = 0

    def plain(self, src, dst, cur, amount):
        self.transfers.append((src, dst, cur, amount, None))

    def swap(self, trader, pool, cur_in, amount_in, cur_out, amount_out, recipient=None):
        sid = self._swaps
        self._swaps += 1
        self.transfers.append((trader, pool, cur_in, amount_in, sid))
        self.transfers.append((pool, recipient or trader, cur_out, amount_out, sid))


class _BlockBuilder:
    def __init__(self, spec: ScenarioSpec, number: int, index: int):
        self.spec = spec
        self.number = number
        self.rng = random.Random(block_seed(spec.seed, number))
        self.timestamp = spec.start_timestamp + index * spec.block_interval
        self._used = set()
        pool = corpus_miners(spec.seed, spec.miners)
        self.miner, self.payout = pool[self.rng.randrange(len(pool))]
        self._used.update(pool[0])
        self.tokens = [self.addr() for _ in range(spec.tokens_per_block)]
        self.groups = []  # list of lists of _Tx; each group stays contiguous
        self.planted = []  # (structure name, [txs], info dict)

    def addr(self) -> str:
        while True:
            a = "0x%040x" % self.rng.getrandbits(160)
            if a not in self._used:
                self._used.add(a)
                return a

    def amount(self, lo_exp=17, hi_exp=20) -> int:
        return self.rng.randrange(10**lo_exp, 10**hi_exp)

    def pick_tokens(self, k):
        return [_token(t) for t in self.rng.sample(self.tokens, k)]

    # ---------------------------------------------------------------- MEV

    def _bot(self):
        eoa, contract = self.addr(), self.addr()
        return eoa, contract

    def _mev_tx(self, eoa, contract):
        tx = _Tx(eoa, contract, erc20=True, category="defi", gas_used=self.rng.randrange(120_000, 400_000))
        tx.mev = True
        return tx

    def _victim_swap(self, pool, token, gross_scale):
        victim, router = self.addr(), self.addr()
        tx = _Tx(victim, router, erc20=True, category="defi", gas_used=self.rng.randrange(100_000, 200_000))
        tx.swap(victim, pool, NATIVE_J, self.amount(), token, self.amount(18, 22))
        return tx

    def _pay_miner(self, txs, gross: int, contract: str):
        """Spread a planted miner share over tips and an optional direct payment."""
        if gross <= 0:
            share = Fraction(self.rng.randrange(0, 50), 1000)
            budget = self.rng.randrange(0, 10**16)
        else:
            share = self.rng.choice(MINER_SHARES)
            budget = int(gross * share)
        direct = 0
        if budget and self.rng.random() < self.spec.direct_payment_probability:
            direct = budget // 3
            txs[-1].plain(contract, self.miner, NATIVE_J, direct)
        rest = budget - direct
        if len(txs) > 1:
            front = rest // 10 if self.rng.random() < 0.5 else 0
            txs[0].tip = front
            txs[-1].tip = rest - front
        else:
            txs[-1].tip = rest
        return direct

    def plant(self, name: str) -> None:
        getattr(self, "_plant_" + name)()

    def _close(self, name, txs, cycles, gross, direct, contract, extra=None):
        info = {"gross": gross, "direct": direct, "beneficiary": contract, "cycles": cycles}
        if extra:
            info.update(extra)
        self.planted.append((name, txs, info))

    def _plant_none(self):
        pass

    def _sandwich(self, name, lose=False):
        eoa, bot = self._bot()
        pool = self.addr()
        (tok,) = self.pick_tokens(1)
        a0 = self.amount()
        b = self.amount(18, 23)
        # a loss never exceeds what the front-run put in
        delta = self.rng.randrange(10**15, min(10**18, a0))
        a1 = a0 - delta if lose else a0 + delta
        front = self._mev_tx(eoa, bot)
        front.swap(bot, pool, NATIVE_J, a0, tok, b)
        victim = self._victim_swap(pool, tok, a0)
        back = self._mev_tx(eoa, bot)
        back.swap(bot, pool, tok, b, NATIVE_J, a1)
        direct = self._pay_miner([front, back], a1 - a0, bot)
        self.groups.append([front, victim, back])
        self._close(name, [front, back], [[(front, 0), (front, 1), (back, 0), (back, 1)]], Fraction(a1 - a0), direct, bot)

    def _plant_sandwich(self):
        self._sandwich("sandwich")

    def _plant_losing_sandwich(self):
        self._sandwich("losing_sandwich", lose=True)

    def _plant_double_sandwich(self):
        eoa, bot = self._bot()
        p1, p2 = self.addr(), self.addr()
        t1, t2 = self.pick_tokens(2)
        a0, c0 = self.amount(), self.amount()
        b, d = self.amount(18, 23), self.amount(18, 23)
        a1 = a0 + self.rng.randrange(10**15, 10**18)
        c1 = c0 + self.rng.randrange(10**15, 10**18)
        front = self._mev_tx(eoa, bot)
        front.swap(bot, p1, NATIVE_J, a0, t1, b)
        front.swap(bot, p2, NATIVE_J, c0, t2, d)
        v1 = self._victim_swap(p1, t1, a0)
        v2 = self._victim_swap(p2, t2, c0)
        back = self._mev_tx(eoa, bot)
        back.swap(bot, p1, t1, b, NATIVE_J, a1)
        back.swap(bot, p2, t2, d, NATIVE_J, c1)
        gross = (a1 - a0) + (c1 - c0)
        direct = self._pay_miner([front, back], gross, bot)
        self.groups.append([front, v1, v2, back])
        cycles = [
            [(front, 0), (front, 1), (back, 0), (back, 1)],
            [(front, 2), (front, 3), (back, 2), (back, 3)],
        ]
        self._close("double_sandwich", [front, back], cycles, Fraction(gross), direct, bot)

    def _plant_backrun(self):
        eoa, bot = self._bot()
        p1, p2 = self.addr(), self.addr()
        (tok,) = self.pick_tokens(1)
        target = self._victim_swap(p1, tok, 0)
        a0, b = self.amount(), self.amount(18, 23)
        a1 = a0 + self.rng.randrange(10**15, 10**18)
        tx = self._mev_tx(eoa, bot)
        tx.swap(bot, p1, NATIVE_J, a0, tok, b)
        tx.swap(bot, p2, tok, b, NATIVE_J, a1)
        direct = self._pay_miner([tx], a1 - a0, bot)
        self.groups.append([target, tx])
        self._close("backrun", [tx], [[(tx, 0), (tx, 1), (tx, 2), (tx, 3)]], Fraction(a1 - a0), direct, bot)

    def _plant_triangular(self):
        eoa, bot = self._bot()
        p1, p2, p3 = self.addr(), self.addr(), self.addr()
        t1, t2 = self.pick_tokens(2)
        a0, b, c = self.amount(), self.amount(18, 23), self.amount(18, 23)
        a1 = a0 + self.rng.randrange(10**15, 10**18)
        tx = self._mev_tx(eoa, bot)
        tx.swap(bot, p1, NATIVE_J, a0, t1, b)
        tx.swap(bot, p2, t1, b, t2, c)
        tx.swap(bot, p3, t2, c, NATIVE_J, a1)
        direct = self._pay_miner([tx], a1 - a0, bot)
        self.groups.append([tx])
        self._close("triangular", [tx], [[(tx, i) for i in range(6)]], Fraction(a1 - a0), direct, bot)

    def _plant_double_arbitrage(self):
        eoa, bot = self._bot()
        pools = [self.addr() for _ in range(4)]
        t1, t2 = self.pick_tokens(2)
        tx = self._mev_tx(eoa, bot)
        gross = 0
        for k, tok in enumerate((t1, t2)):
            a0, b = self.amount(), self.amount(18, 23)
            a1 = a0 + self.rng.randrange(10**15, 10**18)
            tx.swap(bot, pools[2 * k], NATIVE_J, a0, tok, b)
            tx.swap(bot, pools[2 * k + 1], tok, b, NATIVE_J, a1)
            gross += a1 - a0
        direct = self._pay_miner([tx], gross, bot)
        self.groups.append([tx])
        cycles = [[(tx, i) for i in range(4)], [(tx, i) for i in range(4, 8)]]
        self._close("double_arbitrage", [tx], cycles, Fraction(gross), direct, bot)

    def _plant_suboptimal(self):
        eoa, bot = self._bot()
        p1, p2 = self.addr(), self.addr()
        (tok,) = self.pick_tokens(1)
        a0 = self.amount()
        b = self.amount(18, 23)
        b2 = b + self.rng.choice([-1, 1]) * self.rng.randrange(1, b // 20)
        # settled profit is f * (b * a1 / b2 - a0) with f = min(1, b2 / b); keep it positive
        f = min(Fraction(1), Fraction(b2, b))
        a1 = int(Fraction(a0 * b2, b)) + self.rng.randrange(10**15, 10**18)
        tx = self._mev_tx(eoa, bot)
        tx.swap(bot, p1, NATIVE_J, a0, tok, b)
        tx.swap(bot, p2, tok, b2, NATIVE_J, a1)
        gross = f * (Fraction(b * a1, b2) - a0)
        direct = self._pay_miner([tx], int(gross), bot)
        self.groups.append([tx])
        self._close("suboptimal", [tx], [[(tx, i) for i in range(4)]], gross, direct, bot, {"flow_factor": f})

    def _plant_worked_example(self):
        eoa, a = self._bot()
        b, c = self.addr(), self.addr()
        (tok,) = self.pick_tokens(1)
        tx = self._mev_tx(eoa, a)
        tx.swap(a, b, NATIVE_J, 100, tok, 90)
        tx.swap(a, c, tok, 92, NATIVE_J, 110)
        self.groups.append([tx])
        # the second swap carries 90 of its 92 capacity at its full 110/92 ratio
        back = Fraction(90 * 110, 92)
        self._close(
            "worked_example",
            [tx],
            [[(tx, i) for i in range(4)]],
            back - 100,
            0,
            a,
            {"residuals": {2: Fraction(2), 3: 110 - back}, "flow_factor": Fraction(1)},
        )

    def _plant_adversarial(self):
        """Layered parallel swaps: 2**layers paths through one chain, no cycles."""
        eoa, contract = self._bot()
        nodes = [self.addr() for _ in range(self.spec.adversarial_layers + 1)]
        currencies = [NATIVE_J] + [_token(self.addr()) for _ in range(self.spec.adversarial_layers)]
        tx = _Tx(eoa, contract, erc20=True, category="defi")
        for i in range(self.spec.adversarial_layers):
            for _ in range(2):
                pool = self.addr()
                tx.swap(nodes[i], pool, currencies[i], self.amount(), currencies[i + 1], self.amount(), recipient=nodes[i + 1])
        self.groups.append([tx])

    # -------------------------------------------------------------- noise

    def noise(self) -> None:
        spec = self.spec
        budget = spec.noise_transfers
        for _ in range(spec.noise_swaps):
            self.groups.append([self._noise_swap_chain()])
        for _ in range(spec.payout_txs):
            self.groups.append([self._payout_tx()])
        kinds = ["plain", "plain", "token", "router", "nft", "call"]
        while budget > 0:
            kind = self.rng.choice(kinds)
            tx = getattr(self, "_noise_" + kind)()
            budget -= max(1, len(tx.transfers))
            self.groups.append([tx])

    def _sink(self):
        return self.addr()

    def _noise_plain(self):
        tx = _Tx(self.addr(), self._sink(), input_data=False, category="plain_transfer", gas_used=21_000)
        tx.plain(tx.sender, tx.receiver, NATIVE_J, self.amount(15, 19))
        return tx

    def _noise_token(self):
        (tok,) = self.pick_tokens(1)
        tx = _Tx(self.addr(), tok["contract"], erc20=True, category="defi", gas_used=60_000)
        tx.plain(tx.sender, self._sink(), tok, self.amount(18, 22))
        return tx

    def _noise_router(self):
        (tok,) = self.pick_tokens(1)
        router = self.addr()
        tx = _Tx(self.addr(), router, erc20=True, category="defi", gas_used=90_000)
        v = self.amount(18, 22)
        tx.plain(tx.sender, router, tok, v)
        tx.plain(router, self._sink(), tok, v)
        return tx

    def _noise_nft(self):
        contract = self.addr()
        tx = _Tx(self.addr(), contract, erc721=True, category="nft", gas_used=80_000)
        cur = {"kind": "nft", "contract": contract, "token_id": str(self.rng.getrandbits(64))}
        tx.plain(tx.sender, self._sink(), cur, 1)
        return tx

    def _noise_call(self):
        contract = self.addr()
        tx = _Tx(self.addr(), contract, category="unknown", gas_used=70_000)
        if self.rng.random() < 0.5:
            tx.plain(tx.sender, contract, NATIVE_J, self.amount(15, 18))
        return tx

    def _payout_tx(self):
        sender = self.miner if self.rng.random() < 0.5 else self.payout
        tx = _Tx(sender, self._sink(), input_data=False, category="miner_payment", gas_used=21_000)
        tx.plain(sender, tx.receiver, NATIVE_J, self.amount(15, 18))
        tx.private = True
        return tx

    def _noise_swap_chain(self):
        """A trader walks through 1-3 previously unvisited currencies, never returning."""
        trader = self.addr()
        tx = _Tx(trader, self.addr(), erc20=True, category="defi", gas_used=self.rng.randrange(100_000, 300_000))
        path = [NATIVE_J] + self.pick_tokens(self.rng.randrange(1, min(3, len(self.tokens)) + 1))
        for cin, cout in zip(path, path[1:]):
            tx.swap(trader, self.addr(), cin, self.amount(), cout, self.amount(18, 22))
        return tx


def _tx_hash(seed, number, index) -> str:
    return "0x" + hashlib.sha256(f"tx:{seed}:{number}:{index}".encode()).hexdigest()


def _build_block(spec: ScenarioSpec, index: int, structures: list):
    number = spec.first_block + index
    bb = _BlockBuilder(spec, number, index)
    for name in structures:
        bb.plant(name)
    bb.noise()
    bb.rng.shuffle(bb.groups)
    txs = [tx for group in bb.groups for tx in group]
    base_fee = bb.rng.randrange(spec.base_fee_gwei[0] * GWEI, spec.base_fee_gwei[1] * GWEI + 1) if spec.fees else None
    for tx in txs:
        if tx.tip == 0 and not tx.mev and tx.category != "miner_payment" and bb.rng.random() < 0.8:
            tx.tip = bb.rng.randrange(1, 3 * GWEI) * tx.gas_used
    in_gap = index in set(spec.gap_blocks)

    # global edge ids as ingestion will number them: log edges, burn, tip
    position = {}
    next_id = 0
    for tx in txs:
        for k in range(len(tx.transfers)):
            position[(id(tx), k)] = next_id
            next_id += 1
        if spec.fees:
            next_id += 1
        if tx.tip > 0:
            next_id += 1

    records = []
    hashes = []
    for i, tx in enumerate(txs):
        h = _tx_hash(spec.seed, number, i)
        hashes.append(h)
        transfers = []
        for src, dst, cur, amount, sid in tx.transfers:
            rec = {"amount": str(amount), "currency": cur, "receiver": dst, "sender": src}
            if sid is not None:
                rec["swap_id"] = sid
            transfers.append(rec)
        rec = {
            "erc20_activity": tx.erc20,
            "erc721_activity": tx.erc721,
            "gas_tip_paid": str(tx.tip),
            "has_input_data": tx.input_data,
            "hash": h,
            "receiver": tx.receiver,
            "sender": tx.sender,
            "transfers": transfers,
            "tx_index": i,
        }
        if spec.fees:
            rec["gas_used"] = tx.gas_used
        records.append(rec)
    block = {
        "miner": bb.miner,
        "number": number,
        "static_reward": str(spec.static_reward_wei),
        "timestamp": bb.timestamp,
        "transactions": records,
    }
    if spec.fees:
        block["base_fee_per_gas"] = str(base_fee)

    # privacy: private txs are either never seen or seen only after inclusion
    index_of = {id(tx): i for i, tx in enumerate(txs)}
    sightings = []
    privacy = {}
    for i, tx in enumerate(txs):
        frac = spec.mev_private_fraction if tx.mev else spec.private_fraction
        private = tx.private or bb.rng.random() < frac
        if private:
            if bb.rng.random() < 0.5:
                sightings.append((bb.timestamp + bb.rng.randrange(1, 120), hashes[i]))
            privacy[hashes[i]] = "unknown" if in_gap else "private"
        elif in_gap:
            privacy[hashes[i]] = "unknown"
        else:
            sightings.append((bb.timestamp - bb.rng.randrange(0, 90), hashes[i]))
            privacy[hashes[i]] = "public"

    relay_count = int(Fraction(spec.relay_fraction).limit_denominator(10**6) * len(txs) + Fraction(1, 2))
    relay_idx = sorted(bb.rng.sample(range(len(txs)), relay_count)) if relay_count else []
    relay = {hashes[i]: f"bundle-{number}-{k // 2}" for k, i in enumerate(relay_idx)}

    extractions = []
    mev_idx = set()
    for name, group, info in bb.planted:
        tx_ids = sorted(index_of[id(tx)] for tx in group)
        mev_idx.update(tx_ids)
        tips = sum(tx.tip for tx in group)
        burnt = sum(base_fee * tx.gas_used for tx in group) if spec.fees else 0
        gross = info["gross"]
        miner_total = tips + info["direct"]
        if gross > 0:
            share = Fraction(miner_total) / gross
            driver = "miner_driven" if share > Fraction(95, 100) else "bot_driven"
        else:
            share, driver = None, "indeterminate"
        ex = {
            "structure": name,
            "beneficiary": info["beneficiary"],
            "tx_indices": tx_ids,
            "category": PROFIT_STRUCTURES[name],
            "gross_profit_wei": ratio_str(gross),
            "tips_wei": str(tips),
            "direct_wei": str(info["direct"]),
            "burnt_wei": str(burnt),
            "net_bot_profit_wei": ratio_str(gross - tips - info["direct"] - burnt),
            "miner_share": None if share is None else ratio_str(share),
            "driver": driver,
            "cycles": [[position[(id(tx), k)] for tx, k in cyc] for cyc in info["cycles"]],
        }
        if "residuals" in info:
            base = ex["cycles"][0][0]
            ex["residuals"] = {str(base + k): ratio_str(v) for k, v in info["residuals"].items()}
        if "flow_factor" in info:
            ex["flow_factor"] = ratio_str(info["flow_factor"])
        extractions.append(ex)
    extractions.sort(key=lambda e: (e["tx_indices"][0], e["beneficiary"]))
    non_mev_tips = sum(tx.tip for i, tx in enumerate(txs) if i not in mev_idx)
    truth = {
        "block": number,
        "structures": list(structures),
        "extractions": extractions,
        "privacy": {h: privacy[h] for h in hashes},
        "relay": relay,
        "relay_planted": relay_count,
        "tx_categories": {hashes[i]: tx.category for i, tx in enumerate(txs)},
        "payout_addresses": [bb.payout],
        "block_reward_wei": str(spec.static_reward_wei + non_mev_tips),
        "tx_count": len(txs),
        "transfer_count": sum(len(tx.transfers) for tx in txs),
    }
    return block, sightings, relay, truth


def _block_structures(spec: ScenarioSpec, index: int) -> list:
    if spec.plan:
        return list(spec.plan[index % len(spec.plan)])
    rng = random.Random(block_seed(spec.seed ^ 0x5A5A5A5A, spec.first_block + index))
    lo, hi = spec.structures_per_block
    names = sorted(spec.mix)
    weights = [spec.mix[n] for n in names]
    count = rng.randint(lo, hi)
    return [n for n in rng.choices(names, weights, k=count) if n != "none"] if count else []


def generate(spec: ScenarioSpec) -> Corpus:
    spec.validate()
    block_lines = []
    sightings = []
    bundle_lines = []
    truth = []
    gaps = []
    for index in range(spec.blocks):
        structures = _block_structures(spec, index)
        block, seen, relay, t = _build_block(spec, index, structures)
        block_lines.append(_dumps(block) + "\n")
        sightings.extend(seen)
        for h, bundle in sorted(relay.items(), key=lambda kv: (kv[1], kv[0])):
            bundle_lines.append(f"{block['number']}\t{bundle}\t{h}\n")
        if index in set(spec.gap_blocks):
            ts = block["timestamp"]
            gaps.append((ts - 5, ts + 5))
        truth.append(t)
    sightings.sort()
    mempool = "".join(f"#gap {a} {b}\n" for a, b in gaps) + "".join(f"{ts}\t{h}\n" for ts, h in sightings)
    manifest = {
        "rng": RNG_NAME,
        "rng_version": RNG_VERSION,
        "seed": spec.seed,
        "scenario": spec.to_json(),
    }
    return Corpus(
        blocks="".join(block_lines).encode("ascii"),
        mempool=mempool.encode("ascii"),
        bundles="".join(bundle_lines).encode("ascii"),
        truth=truth,
        manifest=manifest,
    )
