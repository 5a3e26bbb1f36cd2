"""Synthetic corpora and brute-force oracles."""

from .generator import STRUCTURES, Corpus, ScenarioError, ScenarioSpec, generate
from .oracle import OracleRefused, brute_force_cycles, hop_cycle_exists, validate_cycle

__all__ = [
    "STRUCTURES",
    "Corpus",
    "OracleRefused",
    "ScenarioError",
    "ScenarioSpec",
    "brute_force_cycles",
    "generate",
    "hop_cycle_exists",
    "validate_cycle",
]
