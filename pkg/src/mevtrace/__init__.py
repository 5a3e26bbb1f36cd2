"""Detect, settle and classify MEV extraction in block transfer logs."""

from .classifier import DriverClass, MevCategory, classify_extraction
from .detector import Detector, DetectorConfig, PruneConfig, detect_cycles
from .graph import TransferGraph, build_graph, coalesce_edges
from .ingest import ParseError, parse_block_log, parse_bundles, parse_mempool, prepare_block
from .model import NATIVE, Address, BlockRecord, Currency, TransactionRecord, TransferRecord
from .pipeline import PipelineConfig, run_pipeline
from .report import aggregate_miner_stats, build_report, emit_report
from .risk import BlockRiskReport, assess_block
from .settlement import MevCycle, MevExtraction, RateTable, coalesce_cycles, settle

__version__ = "0.1.0"
