"""Prometheus metrics for trustexec."""

import logging
from pathlib import Path
from typing import Union

from prometheus_client import REGISTRY, Counter, Histogram, write_to_textfile

logger = logging.getLogger(__name__)

# ---------------------------------------------------------------------------
# Metric definitions
# ---------------------------------------------------------------------------

STEPS_EXECUTED = Counter(
    "trustexec_steps_executed_total",
    "Trust-λ steps executed",
    ["kind", "status"],
)

STEP_DURATION = Histogram(
    "trustexec_step_duration_seconds",
    "Per-step execution duration",
    ["kind"],
)

PROOFS_APPENDED = Counter(
    "trustexec_proofs_appended_total",
    "Execution proofs committed to the public log",
)

PROOFS_REJECTED = Counter(
    "trustexec_proofs_rejected_total",
    "Proofs refused by the log because their signature did not verify",
)

CHAIN_VERIFICATIONS = Counter(
    "trustexec_chain_verifications_total",
    "Proof-chain verifications",
    ["outcome"],
)

BUDGET_EXHAUSTIONS = Counter(
    "trustexec_budget_exhaustions_total",
    "Tasks refused because a POD's privacy budget ran out",
)

ATTESTATION_FAILURES = Counter(
    "trustexec_attestation_failures_total",
    "Instances that failed owner-side attestation",
)

PROVER_VERDICTS = Counter(
    "trustexec_prover_verdicts_total",
    "Data prover verdicts",
    ["verdict"],
)


def write_metrics(path: Union[str, Path]) -> None:
    """Dump the default registry in text exposition format."""
    write_to_textfile(str(path), REGISTRY)
    logger.debug(f"Metrics written to {path}")
