from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from builders import ETH, A, addr, block, leg, sandwich_block, tx, worked_example_block
from mevtrace.ingest import parse_block_log
from mevtrace.model import NATIVE
from mevtrace.pipeline import run_pipeline
from mevtrace.risk import BlockRiskReport, assess_block, block_reward, fork_flags
from mevtrace.synth import ScenarioSpec, generate

R = 2 * ETH


def risk_of(b, **kw):
    return run_pipeline([b]).blocks[0].risk


def test_empty_block_reward_is_static_reward():
    rep = risk_of(block([]))
    assert rep.block_reward_eth == R
    assert not rep.fee_fork_viable and not rep.replace_fork_viable


def test_tips_outside_mev_count_towards_reward():
    plain = tx(3, addr("alice"), [leg(addr("alice"), addr("bob"), NATIVE, ETH)], tip=ETH // 4, gas=21000)
    b = sandwich_block()
    b.transactions.append(plain)
    b.renumber()
    rep = risk_of(b)
    assert rep.block_reward_eth == R + ETH // 4


def test_all_mev_block_reward_is_static_only():
    b = worked_example_block()
    b.transactions[0].gas_tip_paid = 5 * ETH
    assert risk_of(b).block_reward_eth == R


def test_static_reward_override():
    assert block_reward(block([]), [], static_reward=3 * ETH) == 3 * ETH


def test_reward_matches_generator_truth():
    spec = ScenarioSpec(seed=4, blocks=30, mix={"sandwich": 1, "backrun": 1, "none": 1}, structures_per_block=(0, 2))
    corpus = generate(spec)
    result = run_pipeline(parse_block_log(corpus.blocks))
    for b, truth in zip(result.blocks, corpus.truth):
        assert b.risk.block_reward_eth == Fraction(truth["block_reward_wei"])


def _report(income, total, reward=R, k=4):
    return fork_flags(BlockRiskReport(1, "m", Fraction(reward), Fraction(income), Fraction(total), Fraction(k)))


@pytest.mark.parametrize("delta, expected", [(-1, False), (0, False), (1, True)])
def test_fork_threshold_is_strict(delta, expected):
    rep = _report(4 * R + delta, 4 * R + delta)
    assert rep.fee_fork_viable is expected
    assert rep.replace_fork_viable is expected


def test_income_between_one_and_four_rewards_sets_neither_flag():
    for income in (R, 2 * R, 4 * R - 1):
        rep = _report(income, income)
        assert not rep.fee_fork_viable and not rep.replace_fork_viable


def test_sandwich_paying_over_four_rewards_triggers_both_flags():
    b = sandwich_block(gross=10 * ETH, tip=9 * ETH)
    rep = risk_of(b)
    assert rep.miner_mev_income_eth == 9 * ETH
    assert rep.fee_fork_viable and rep.replace_fork_viable


@settings(max_examples=200)
@given(st.integers(0, 10**20), st.integers(0, 10**20), st.integers(1, 10**19), st.integers(1, 10))
def test_flags_are_monotone_in_income(income, bump, reward, k):
    low = _report(income, income, reward, k)
    high = _report(income + bump, income + bump, reward, k)
    assert low.fee_fork_viable <= high.fee_fork_viable
    assert low.replace_fork_viable <= high.replace_fork_viable


@settings(max_examples=200)
@given(st.integers(0, 10**20), st.integers(-(10**20), 10**20), st.integers(1, 10**19))
def test_fee_fork_implies_replace_fork_when_profit_covers_income(income, extra, reward):
    total = income + extra
    rep = _report(income, total, reward)
    if total >= income and rep.fee_fork_viable:
        assert rep.replace_fork_viable


def test_json_round_trip_recomputes_flags():
    rep = _report(9 * R, 9 * R)
    obj = rep.to_json()
    obj["fee_fork_viable"] = False
    obj["replace_fork_viable"] = False
    back = BlockRiskReport.from_json(obj)
    assert back.fee_fork_viable and back.replace_fork_viable
    assert back.to_json() == rep.to_json()


def test_hash_rate_lookup():
    b = block([])
    rep = assess_block(b, [], hash_rates={b.miner: Fraction(1, 5)})
    assert rep.miner_above_hash_threshold is True
    assert assess_block(b, []).miner_above_hash_threshold is None
