"""Public proof storage and POD fixtures."""

from .fixtures import FixtureRecord, load_fixture, materialize, parse_fixture
from .proof_log import ProofLog, trace_lineage, verify_chain

__all__ = [
    "FixtureRecord",
    "load_fixture",
    "materialize",
    "parse_fixture",
    "ProofLog",
    "trace_lineage",
    "verify_chain",
]
