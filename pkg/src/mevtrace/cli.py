"""Command-line entry point: ``detect``, ``synth``, ``report`` and ``validate``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from fractions import Fraction
from pathlib import Path

from .detector import DetectorConfig, PruneConfig, detect_cycles
from .graph import build_graph, coalesce_edges
from .ingest import ParseError, prepare_block, read_block_log, read_bundles, read_mempool
from .model import Address, parse_eth
from .pipeline import EXIT_INVARIANT, EXIT_OK, EXIT_PARSE, PipelineConfig, run_pipeline
from .report import FORMATS, build_report, emit_report, load_report
from .synth import OracleRefused, ScenarioError, ScenarioSpec, brute_force_cycles, generate

log = logging.getLogger("mevtrace")

EXIT_IO = 1


class InputError(Exception):
    """An input file could not be opened or read."""


def _read(reader, path):
    try:
        return reader(path)
    except OSError as exc:
        raise InputError(exc) from exc


def _ratio(text: str) -> Fraction:
    try:
        value = Fraction(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"not a rational number: {text!r}") from exc
    if value < 0:
        raise argparse.ArgumentTypeError("must be non-negative")
    return value


def _wei(text: str) -> int:
    try:
        return parse_eth(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"not an ETH amount: {text!r}") from exc


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mevtrace", description="Detect and account for MEV extraction in block transfer logs.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log warnings and progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    d = sub.add_parser("detect", help="run the full pipeline and write a report")
    d.add_argument("--blocks", required=True, type=Path, help="block log (JSON lines)")
    d.add_argument("--mempool", type=Path, help="mempool capture (TSV); without it privacy stays unknown")
    d.add_argument("--bundles", type=Path, help="relay bundle index (TSV)")
    d.add_argument("--out", required=True, type=Path, help="output directory")
    d.add_argument("--format", choices=FORMATS, default="structured")
    d.add_argument("--workers", type=_positive, default=1)
    d.add_argument("--static-reward", type=_wei, metavar="ETH", help="override every block's static reward")
    d.add_argument("--driver-threshold", type=_ratio, default=Fraction(95, 100), metavar="NUM/DEN")
    d.add_argument("--fork-multiplier", type=_ratio, default=Fraction(4), metavar="K")
    d.add_argument("--payout-address", action="append", default=[], metavar="ADDR", help="known mining-pool payout address (repeatable)")
    d.add_argument("--relaxed-endpoints", action="store_true", help="also accept cycles whose first and last edges are out of order")

    s = sub.add_parser("synth", help="generate a labelled synthetic corpus")
    s.add_argument("--spec", required=True, type=Path, help="scenario JSON")
    s.add_argument("--out", required=True, type=Path)
    s.add_argument("--seed", type=_u64, help="override the scenario seed")

    r = sub.add_parser("report", help="re-emit a structured report in another format")
    r.add_argument("--in", dest="source", required=True, type=Path, help="report.json or the directory holding it")
    r.add_argument("--out", required=True, type=Path)
    r.add_argument("--format", choices=FORMATS, default="tabular")

    v = sub.add_parser("validate", help="cross-check the detector against the brute-force oracle")
    v.add_argument("--blocks", required=True, type=Path)
    v.add_argument("--max-edges", type=_positive, default=14)
    v.add_argument("--relaxed-endpoints", action="store_true")
    return parser


def cmd_detect(args) -> int:
    blocks = _read(read_block_log, args.blocks)
    pool = _read(read_mempool, args.mempool) if args.mempool else None
    bundles = _read(read_bundles, args.bundles) if args.bundles else None
    config = PipelineConfig(
        static_reward=args.static_reward,
        driver_threshold=args.driver_threshold,
        fork_multiplier=args.fork_multiplier,
        payout_addresses=frozenset(Address(a) for a in args.payout_address),
        detector=DetectorConfig(relaxed_endpoints=args.relaxed_endpoints),
        workers=args.workers,
    )
    result = run_pipeline(blocks, pool, bundles, config)
    emit_report(build_report(result, config), args.out, args.format)
    for v in result.violations:
        log.error("invariant violation: %s", v)
    code = result.exit_code
    print(f"{len(result.extractions)} extraction(s) in {len(result.blocks)} block(s); exit {code}")
    return code


def cmd_synth(args) -> int:
    try:
        obj = json.loads(_read(Path.read_text, args.spec))
        if args.seed is not None:
            obj["seed"] = args.seed
        spec = ScenarioSpec.from_json(obj)
        corpus = generate(spec)
    except (ScenarioError, TypeError, json.JSONDecodeError) as exc:
        print(f"error: invalid scenario: {exc}", file=sys.stderr)
        return EXIT_PARSE
    corpus.write(args.out)
    print(f"{spec.blocks} block(s) written to {args.out}; sha256 {corpus.digest()}")
    return EXIT_OK


def cmd_report(args) -> int:
    source = args.source / "report.json" if args.source.is_dir() else args.source
    try:
        report = _read(load_report, source)
    except json.JSONDecodeError as exc:
        print(f"error: {source}:{exc.lineno}:{exc.colno}: {exc.msg}", file=sys.stderr)
        return EXIT_PARSE
    emit_report(report, args.out, args.format)
    return EXIT_OK


def _signature(cycles) -> list:
    return [(tuple(c.edge_ids), c.flow_factor, c.profit) for c in cycles]


def cmd_validate(args) -> int:
    blocks = _read(read_block_log, args.blocks)
    checked = skipped = mismatched = 0
    for block in blocks:
        graph = coalesce_edges(build_graph(prepare_block(block)))
        try:
            expected = brute_force_cycles(graph, args.max_edges, relaxed=args.relaxed_endpoints)
        except OracleRefused:
            skipped += 1
            continue
        config = DetectorConfig(PruneConfig.unbounded(), relaxed_endpoints=args.relaxed_endpoints)
        got = detect_cycles(graph, config).cycles
        checked += 1
        if _signature(got) != [(c.edge_ids, c.flow_factor, c.profit) for c in expected]:
            mismatched += 1
            print(f"block {block.number}: detector {[c.edge_ids for c in got]} oracle {[c.edge_ids for c in expected]}")
    print(f"checked {checked} block(s), skipped {skipped} over {args.max_edges} edges, {mismatched} mismatch(es)")
    return EXIT_INVARIANT if mismatched else EXIT_OK


COMMANDS = {"detect": cmd_detect, "synth": cmd_synth, "report": cmd_report, "validate": cmd_validate}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except InputError as exc:
        print(f"error: cannot read input: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
