import io
import json
import logging
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from builders import ETH, LIRA, MINER, A, B, C, addr, block, leg, sandwich_block, token, tx
from mevtrace.ingest import (
    MempoolCapture,
    ParseError,
    categorize_tx,
    parse_block_log,
    parse_bundles,
    parse_mempool,
    reorder_block_swaps,
    reorder_swap_transfers,
    serialize_block_log,
    synthesize_fee_edges,
    tag_privacy,
    tag_relay_bundles,
)
from mevtrace.model import BURN_SINK, NATIVE, Origin, Privacy, TxCategory
from mevtrace.synth import ScenarioSpec, generate

HASH = "0x" + "ab" * 32


def _line(**over):
    obj = {
        "number": 7,
        "timestamp": 100,
        "miner": str(MINER),
        "static_reward": str(2 * ETH),
        "base_fee_per_gas": "10",
        "transactions": [
            {
                "hash": HASH,
                "tx_index": 0,
                "sender": str(A),
                "receiver": str(B),
                "has_input_data": True,
                "erc20_activity": True,
                "erc721_activity": False,
                "gas_used": 21000,
                "gas_tip_paid": "0",
                "transfers": [
                    {"sender": str(A), "receiver": str(B), "currency": LIRA.to_json(), "amount": "100"},
                ],
            }
        ],
    }
    obj.update(over)
    return json.dumps(obj)


def test_empty_stream_gives_no_blocks():
    assert parse_block_log(io.StringIO("")) == []
    assert parse_block_log(b"\n\n") == []


def test_minimal_block_has_one_transfer_at_index_zero():
    (b,) = parse_block_log(_line())
    (t,) = b.transfers()
    assert (t.global_index, t.sender, t.receiver, t.currency, t.amount) == (0, A, B, LIRA, 100)
    assert t.origin is Origin.LOG


def test_blocks_come_back_in_number_order():
    text = _line(number=9) + "\n" + _line(number=3) + "\n"
    assert [b.number for b in parse_block_log(text)] == [3, 9]


def test_synth_corpus_round_trips_byte_identically():
    corpus = generate(ScenarioSpec(seed=11, blocks=50, mix={"sandwich": 1, "backrun": 1, "none": 1}, structures_per_block=(0, 2)))
    blocks = parse_block_log(corpus.blocks)
    assert len(blocks) == 50
    assert serialize_block_log(blocks) == corpus.blocks
    assert serialize_block_log(parse_block_log(serialize_block_log(blocks))) == corpus.blocks


def test_syntax_error_reports_line_and_column():
    text = _line() + "\n" + '{"number": 1,, }\n'
    with pytest.raises(ParseError) as err:
        parse_block_log(text, source="blocks.jsonl")
    assert err.value.line == 2
    assert err.value.column == 14
    assert str(err.value).startswith("blocks.jsonl:2:14:")


@pytest.mark.parametrize(
    "over",
    [
        {"miner": "0x12"},
        {"static_reward": "-5"},
        {"number": -1},
        {"transactions": "nope"},
        {"timestamp": True},
    ],
)
def test_schema_violations_raise_parse_error(over):
    with pytest.raises(ParseError) as err:
        parse_block_log(_line(**over))
    assert err.value.line == 1


def test_duplicates_are_rejected():
    with pytest.raises(ParseError, match="duplicate block number"):
        parse_block_log(_line() + "\n" + _line())
    obj = json.loads(_line())
    obj["transactions"].append(dict(obj["transactions"][0]))
    with pytest.raises(ParseError, match="duplicate tx_index"):
        parse_block_log(json.dumps(obj))


def test_swap_with_missing_partner_is_stripped_and_flagged(caplog):
    obj = json.loads(_line())
    obj["transactions"][0]["transfers"][0]["swap_id"] = 3
    with caplog.at_level(logging.WARNING):
        (b,) = parse_block_log(json.dumps(obj))
    assert b.incomplete
    assert all(t.swap_id is None for t in b.transfers())
    assert b.transactions[0].malformed_swaps == [3]
    assert any("exactly two legs" in w for w in b.warnings)


# ---------------------------------------------------------------- reordering


def test_reorder_is_identity_on_ordered_swaps():
    t = tx(0, A, [leg(A, B, NATIVE, 100, 0), leg(B, A, LIRA, 90, 0), leg(A, C, LIRA, 5)])
    blk = block([t])
    out = reorder_swap_transfers(blk.transactions[0])
    assert [(x.sender, x.receiver, x.amount, x.global_index) for x in out.transfers] == [
        (x.sender, x.receiver, x.amount, x.global_index) for x in t.transfers
    ]


def test_reorder_puts_payment_before_receipt():
    t = tx(0, A, [leg(B, A, LIRA, 90, 0), leg(A, B, NATIVE, 100, 0)])
    out = reorder_swap_transfers(block([t]).transactions[0])
    assert [(x.sender, x.amount) for x in out.transfers] == [(A, 100), (B, 90)]
    assert [x.global_index for x in out.transfers] == [0, 1]


def _interleaved_tx(rng, swaps, plains):
    """Trader is the tx sender, so every swap's input leg is known by construction."""
    trader = addr("trader")
    items = []
    for s in range(swaps):
        venue = addr(f"venue{s}")
        pay = leg(trader, venue, NATIVE, rng.randint(1, 999), s)
        get = leg(venue, trader, token(str(s)), rng.randint(1, 999), s)
        items += [pay, get]
    for p in range(plains):
        items.append(leg(addr(f"x{p}"), addr(f"y{p}"), LIRA, rng.randint(1, 999)))
    rng.shuffle(items)
    return tx(0, trader, items)


def _check_reordered(before, after):
    # a permutation of the original transfers
    key = lambda t: (t.sender, t.receiver, t.currency, t.amount, t.swap_id)
    assert sorted(map(key, before.transfers)) == sorted(map(key, after.transfers))
    pos = {}
    for i, t in enumerate(after.transfers):
        assert t.global_index == after.transfers[0].global_index + i
        if t.swap_id is not None:
            pos.setdefault(t.swap_id, []).append((i, t))
    for s, ((i, first), (j, second)) in pos.items():
        assert j == i + 1
        assert first.sender == before.sender
    # plain transfers keep their relative order
    plain = lambda x: [key(t) for t in x.transfers if t.swap_id is None]
    assert plain(before) == plain(after)
    # swaps keep the order of their first appearance
    def first_seen(x):
        out = []
        for t in x.transfers:
            if t.swap_id is not None and t.swap_id not in out:
                out.append(t.swap_id)
        return out

    assert first_seen(before) == first_seen(after)
    # each pair sits where its earliest leg was
    for s in pos:
        earliest = min(k for k, t in enumerate(before.transfers) if t.swap_id == s)
        assert sum(1 for t in before.transfers[:earliest] if t.swap_id is None) == sum(
            1 for t in after.transfers[: pos[s][0][0]] if t.swap_id is None
        )


def test_three_interleaved_swaps_pass_permutation_oracle():
    rng = random.Random(5)
    before = block([_interleaved_tx(rng, 3, 2)]).transactions[0]
    _check_reordered(before, reorder_swap_transfers(before))


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 10**9), st.integers(0, 4), st.integers(0, 4))
def test_reorder_property(seed, swaps, plains):
    before = block([_interleaved_tx(random.Random(seed), swaps, plains)]).transactions[0]
    _check_reordered(before, reorder_swap_transfers(before))


def test_reorder_chain_rule_when_trader_is_not_tx_sender():
    relayer = addr("relayer")
    t = tx(0, relayer, [leg(B, A, LIRA, 90, 0), leg(A, B, NATIVE, 100, 0)])
    out = reorder_swap_transfers(block([t]).transactions[0])
    # neither leg chains and neither sender is a tx endpoint: log order stands
    assert [x.amount for x in out.transfers] == [90, 100]
    t = tx(0, relayer, [leg(B, C, LIRA, 90, 0), leg(A, B, NATIVE, 100, 0)])
    out = reorder_swap_transfers(block([t]).transactions[0])
    assert [x.amount for x in out.transfers] == [100, 90]


def test_block_reorder_keeps_global_order_contiguous():
    rng = random.Random(1)
    blk = block([_interleaved_tx(rng, 2, 1), tx(1, A, [leg(A, B, LIRA, 3)])])
    out = reorder_block_swaps(blk)
    assert [t.global_index for t in out.transfers()] == list(range(6))


# ---------------------------------------------------------------- fee edges


def test_zero_tip_gives_burn_edge_only():
    blk = synthesize_fee_edges(block([tx(0, A, [leg(A, B, LIRA, 1)], gas=21000)], base_fee=7))
    origins = [t.origin for t in blk.transfers()]
    assert origins == [Origin.LOG, Origin.SYNTHETIC_BURN]
    burn = list(blk.transfers())[1]
    assert (burn.sender, burn.receiver, burn.amount) == (A, BURN_SINK, 7 * 21000)
    assert blk.transactions[0].burnt_fee == 7 * 21000


def test_sandwich_tip_appears_as_miner_directed_transfer():
    blk = synthesize_fee_edges(sandwich_block())
    tips = [t for t in blk.transfers() if t.origin is Origin.SYNTHETIC_TIP]
    assert len(tips) == 1
    assert (tips[0].tx_index, tips[0].receiver, tips[0].amount) == (2, MINER, 592 * ETH // 100)


def test_fee_edges_follow_log_edges_within_each_tx():
    blk = synthesize_fee_edges(sandwich_block())
    for t in blk.transactions:
        kinds = [x.origin is Origin.LOG for x in t.transfers]
        assert kinds == sorted(kinds, reverse=True)
    assert [t.global_index for t in blk.transfers()] == list(range(sum(len(t.transfers) for t in blk.transactions)))


def test_synth_fee_edges_match_hand_products():
    corpus = generate(ScenarioSpec(seed=4, blocks=20, mix={"sandwich": 1, "none": 1}, structures_per_block=(0, 1)))
    for raw, line in zip(parse_block_log(corpus.blocks), corpus.blocks.decode().splitlines()):
        obj = json.loads(line)
        base = int(obj["base_fee_per_gas"])
        blk = synthesize_fee_edges(raw)
        total_gas = 0
        for t, rec in zip(blk.transactions, obj["transactions"]):
            burns = [x.amount for x in t.transfers if x.origin is Origin.SYNTHETIC_BURN]
            tips = [x.amount for x in t.transfers if x.origin is Origin.SYNTHETIC_TIP]
            assert burns == [base * rec["gas_used"]]
            assert tips == ([int(rec["gas_tip_paid"])] if int(rec["gas_tip_paid"]) else [])
            total_gas += rec["gas_used"]
        burnt = sum(x.amount for x in blk.transfers() if x.origin is Origin.SYNTHETIC_BURN)
        assert burnt == base * total_gas


def test_missing_fee_fields_warns_and_marks_unavailable(caplog):
    with caplog.at_level(logging.WARNING):
        blk = synthesize_fee_edges(block([tx(0, A, [leg(A, B, LIRA, 1)], tip=5)]))
    assert not blk.fees_available
    assert any("fee fields missing" in w for w in blk.warnings)
    assert [t.origin for t in blk.transfers()] == [Origin.LOG, Origin.SYNTHETIC_TIP]


def test_fee_synthesis_is_idempotent():
    once = synthesize_fee_edges(sandwich_block())
    twice = synthesize_fee_edges(once)
    key = lambda b: [(t.global_index, t.origin, t.amount) for t in b.transfers()]
    assert key(once) == key(twice)


# ---------------------------------------------------------------- privacy


def _three_tx_block():
    return block([tx(i, addr(f"s{i}"), [leg(A, B, LIRA, 1)]) for i in range(3)], timestamp=1000)


def test_privacy_labels():
    blk = _three_tx_block()
    h = [t.hash for t in blk.transactions]
    pool = parse_mempool(f"999\t{h[0]}\n1001\t{h[1]}\n")
    out = tag_privacy(blk, pool)
    assert [t.privacy for t in out.transactions] == [Privacy.PUBLIC, Privacy.PRIVATE, Privacy.PRIVATE]
    # seen exactly at the block timestamp still counts as public
    assert tag_privacy(blk, parse_mempool(f"1000\t{h[2]}\n")).transactions[2].privacy is Privacy.PUBLIC


def test_privacy_both_orderings_and_untagged_default():
    blk = _three_tx_block()
    h = blk.transactions[0].hash
    assert blk.transactions[0].privacy is Privacy.UNKNOWN
    before = tag_privacy(blk, parse_mempool(f"990\t{h}\n"))
    after = tag_privacy(blk, parse_mempool(f"1010\t{h}\n"))
    assert before.transactions[0].privacy is Privacy.PUBLIC
    assert after.transactions[0].privacy is Privacy.PRIVATE


def test_gap_makes_unseen_txs_unknown():
    blk = _three_tx_block()
    h = blk.transactions[0].hash
    out = tag_privacy(blk, parse_mempool(f"#gap 990 1005\n995\t{h}\n"))
    assert [t.privacy for t in out.transactions] == [Privacy.PUBLIC, Privacy.UNKNOWN, Privacy.UNKNOWN]
    outside = tag_privacy(blk, parse_mempool("#gap 0 999\n"))
    assert all(t.privacy is Privacy.PRIVATE for t in outside.transactions)


def test_duplicate_sightings_keep_earliest():
    pool = parse_mempool(f"50\t{HASH}\n20\t{HASH}\n70\t{HASH}\n")
    assert pool.entries == {HASH: 20}


@settings(max_examples=60, deadline=None)
@given(st.randoms(use_true_random=False))
def test_privacy_is_idempotent_and_ignores_capture_line_order(rnd):
    blk = _three_tx_block()
    lines = [f"{rnd.randint(900, 1100)}\t{t.hash}" for t in blk.transactions for _ in range(rnd.randint(0, 2))]
    lines.append("#gap 995 1002" if rnd.random() < 0.5 else "#gap 0 1")
    base = [t.privacy for t in tag_privacy(blk, parse_mempool("\n".join(lines))).transactions]
    rnd.shuffle(lines)
    pool = parse_mempool("\n".join(lines))
    once = tag_privacy(blk, pool)
    assert [t.privacy for t in once.transactions] == base
    assert [t.privacy for t in tag_privacy(once, pool).transactions] == base


@pytest.mark.parametrize("text", ["abc\t" + HASH, "12", "12\t0x12", "#gap 5", "#gap 9 3"])
def test_mempool_format_errors(text):
    with pytest.raises(ParseError):
        parse_mempool(text)


# ---------------------------------------------------------------- relay bundles


def test_empty_bundle_index_leaves_block_unchanged():
    blk = _three_tx_block()
    assert tag_relay_bundles(blk, {}) is blk
    assert tag_relay_bundles(blk, parse_bundles("")) is blk


def test_bundle_members_are_tagged(caplog):
    blk = _three_tx_block()
    h = [t.hash for t in blk.transactions]
    index = parse_bundles(f"1\tb7\t{h[0]}\n1\tb7\t{h[2]}\n1\tb8\t{HASH}\n2\tb9\t{h[1]}\n")
    with caplog.at_level(logging.WARNING):
        out = tag_relay_bundles(blk, index)
    assert [t.relay_bundle for t in out.transactions] == ["b7", None, "b7"]
    assert any("unknown tx" in w for w in out.warnings)
    assert blk.transactions[0].relay_bundle is None


def test_synth_relay_tagging_matches_planted_fraction_exactly():
    corpus = generate(ScenarioSpec(seed=8, blocks=30, relay_fraction=0.25, mix={"sandwich": 1}, structures_per_block=(0, 1)))
    index = parse_bundles(corpus.bundles)
    for blk, truth in zip(parse_block_log(corpus.blocks), corpus.truth):
        out = tag_relay_bundles(blk, index)
        tagged = {t.hash: t.relay_bundle for t in out.transactions if t.relay_bundle}
        assert len(tagged) == truth["relay_planted"]
        assert tagged == truth["relay"]


@pytest.mark.parametrize("text", ["x\tb\t" + HASH, "1\t\t" + HASH, "1\tb", "1\tb\t0xzz"])
def test_bundle_format_errors(text):
    with pytest.raises(ParseError):
        parse_bundles(text)


# ---------------------------------------------------------------- categories


def test_category_precedence():
    payout = addr("payout")
    plain_native = [leg(MINER, A, NATIVE, 5)]
    cases = [
        (dict(erc20=True, erc721=True, input_data=False), MINER, TxCategory.DEFI),
        (dict(erc20=False, erc721=True, input_data=False), MINER, TxCategory.NFT),
        (dict(erc20=False, input_data=False), MINER, TxCategory.MINER_PAYMENT),
        (dict(erc20=False, input_data=False), payout, TxCategory.MINER_PAYMENT),
        (dict(erc20=False, input_data=False), A, TxCategory.PLAIN_TRANSFER),
        (dict(erc20=False, input_data=True), MINER, TxCategory.UNKNOWN),
    ]
    blk = block([])
    for kw, sender, expected in cases:
        t = tx(0, sender, plain_native, receiver=B, **kw)
        assert categorize_tx(t, blk, {payout}) is expected
    creation = tx(0, A, [], erc20=False, input_data=False)
    creation.receiver = None
    assert categorize_tx(creation, blk) is TxCategory.UNKNOWN


def test_zero_tip_transfer_from_miner_is_miner_payment():
    t = tx(0, MINER, [leg(MINER, A, NATIVE, ETH)], receiver=A, erc20=False, input_data=False)
    assert categorize_tx(t, block([t])) is TxCategory.MINER_PAYMENT


def test_categories_match_synth_labels():
    corpus = generate(ScenarioSpec(seed=21, blocks=40, payout_txs=2, mix={"sandwich": 1, "none": 1}, structures_per_block=(0, 1)))
    for blk, truth in zip(parse_block_log(corpus.blocks), corpus.truth):
        payout = set(truth["payout_addresses"])
        for t in blk.transactions:
            assert categorize_tx(t, blk, payout).value == truth["tx_categories"][t.hash]
