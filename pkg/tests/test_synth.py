import hashlib
from fractions import Fraction
import json

import pytest

from builders import LIRA, A, B, block, leg, tx, worked_example_block
from mevtrace.detector import detect_cycles
from mevtrace.graph import build_graph, coalesce_edges
from mevtrace.ingest import parse_block_log, parse_bundles, parse_mempool, prepare_block, reorder_block_swaps
from mevtrace.model import NATIVE
from mevtrace.synth import STRUCTURES, OracleRefused, ScenarioError, ScenarioSpec, brute_force_cycles, generate
from mevtrace.synth.generator import block_seed, corpus_miners
from mevtrace.synth.oracle import candidates_by_subsets, candidates_by_walks, hop_cycle_exists
from mevtrace.synth.smallgraph import random_small_block


def _graph(raw):
    return coalesce_edges(build_graph(prepare_block(raw)))


def test_noise_only_corpus_has_no_cycles():
    spec = ScenarioSpec(seed=3, blocks=150, noise_swaps=8, payout_txs=2)
    corpus = generate(spec)
    assert all(t["extractions"] == [] for t in corpus.truth)
    for raw in parse_block_log(corpus.blocks):
        g = _graph(raw)
        assert not hop_cycle_exists(g)
        assert detect_cycles(g).cycles == []


def test_generation_is_byte_deterministic():
    spec = dict(seed=2**63 + 7, blocks=1000, mix={"sandwich": 1, "backrun": 1, "none": 2}, structures_per_block=(0, 2), relay_fraction=0.05)
    a = generate(ScenarioSpec(**spec))
    b = generate(ScenarioSpec(**spec))
    assert a.digest() == b.digest()
    assert hashlib.sha256(a.blocks).digest() == hashlib.sha256(b.blocks).digest()
    assert a.truth_bytes() == b.truth_bytes()
    spec["seed"] += 1
    assert generate(ScenarioSpec(**spec)).digest() != a.digest()


def test_block_content_does_not_depend_on_corpus_length():
    short = generate(ScenarioSpec(seed=9, blocks=5, mix={"sandwich": 1}, structures_per_block=(0, 1)))
    long = generate(ScenarioSpec(seed=9, blocks=12, mix={"sandwich": 1}, structures_per_block=(0, 1)))
    assert long.blocks.startswith(short.blocks)
    assert long.truth[:5] == short.truth[:5]


def test_sub_seeds_and_miner_pool_are_stable():
    assert block_seed(1, 100) == block_seed(1, 100) != block_seed(1, 101)
    pool = corpus_miners(5, 4)
    assert pool == corpus_miners(5, 4) and len({m for m, _ in pool}) == 4
    corpus = generate(ScenarioSpec(seed=5, blocks=40, miners=4))
    assert {json.loads(line)["miner"] for line in corpus.blocks.splitlines()} <= {m for m, _ in pool}


def test_manifest_records_rng_and_scenario():
    spec = ScenarioSpec(seed=11, blocks=2)
    m = generate(spec).manifest
    assert m["rng"] and m["rng_version"] == 1 and m["seed"] == 11
    assert ScenarioSpec.from_json(m["scenario"]) == spec


def test_written_corpus_parses(tmp_path):
    spec = ScenarioSpec(seed=6, blocks=8, mix={"sandwich": 1}, structures_per_block=(1, 1), relay_fraction=0.2, gap_blocks=[3])
    corpus = generate(spec)
    paths = corpus.write(tmp_path)
    with open(paths["blocks"]) as fh:
        blocks = parse_block_log(fh)
    with open(paths["mempool"]) as fh:
        pool = parse_mempool(fh)
    with open(paths["bundles"]) as fh:
        bundles = parse_bundles(fh)
    assert len(blocks) == 8 and len(pool.gaps) == 1
    assert bundles
    truth = [json.loads(l) for l in paths["truth"].read_text().splitlines()]
    assert truth == json.loads(json.dumps(corpus.truth))


@pytest.mark.parametrize(
    "bad",
    [
        {"seed": -1},
        {"seed": 2**64},
        {"blocks": -3},
        {"mix": {"teleport": 1}, "structures_per_block": (1, 1)},
        {"plan": [["sandwich", "warp"]]},
        {"structures_per_block": (3, 1)},
        {"mix": {"sandwich": 0}, "structures_per_block": (1, 1)},
        {"mix": {"triangular": 1}, "tokens_per_block": 2, "structures_per_block": (1, 1)},
        {"tokens_per_block": 0},
        {"relay_fraction": 1.5},
        {"miners": 0},
    ],
)
def test_impossible_scenarios_are_rejected(bad):
    with pytest.raises(ScenarioError):
        generate(ScenarioSpec(**bad))


def test_unknown_scenario_field_is_rejected():
    with pytest.raises(ScenarioError):
        ScenarioSpec.from_json({"seed": 1, "blocks": 2, "color": "red"})


def test_every_structure_is_detected_as_labelled():
    for name in STRUCTURES:
        if name in ("none", "adversarial"):
            continue
        corpus = generate(ScenarioSpec(seed=21, blocks=4, plan=[[name]]))
        for raw, truth in zip(parse_block_log(corpus.blocks), corpus.truth):
            cycles = detect_cycles(_graph(raw)).cycles
            expected = sorted(tuple(c) for e in truth["extractions"] for c in e["cycles"])
            assert sorted(c.edge_ids for c in cycles) == expected, name


def test_oracle_on_worked_example():
    (c,) = brute_force_cycles(build_graph(worked_example_block()))
    assert c.edge_ids == (0, 1, 2, 3) and c.flow_factor == 1
    assert c.profit == Fraction(90 * 110, 92) - 100


def test_oracle_on_empty_and_single_edge_graphs():
    assert brute_force_cycles(build_graph(block([]))) == []
    assert brute_force_cycles(build_graph(block([tx(0, A, [leg(A, B, LIRA, 1)])]))) == []


def test_oracle_refuses_large_graphs():
    g = build_graph(block([tx(0, A, [leg(A, B, NATIVE, 1) for _ in range(15)])]))
    with pytest.raises(OracleRefused):
        brute_force_cycles(g, max_edges=14)


def test_enumerators_agree_on_small_graphs():
    for seed in range(300):
        g = coalesce_edges(build_graph(reorder_block_swaps(random_small_block(seed, max_edges=10))))
        edges = sorted(g.edges.values(), key=lambda e: e.id)
        assert set(candidates_by_subsets(edges)) == candidates_by_walks(edges)


def test_hop_reachability_matches_planted_cycles():
    corpus = generate(ScenarioSpec(seed=17, blocks=40, mix={"triangular": 1, "backrun": 1, "none": 2}, structures_per_block=(0, 1)))
    for raw, truth in zip(parse_block_log(corpus.blocks), corpus.truth):
        assert hop_cycle_exists(_graph(raw)) == bool(truth["extractions"])


def test_generated_amounts_are_never_negative():
    spec = ScenarioSpec(seed=808, blocks=300, mix={"losing_sandwich": 1}, structures_per_block=(1, 3))
    parse_block_log(generate(spec).blocks)
