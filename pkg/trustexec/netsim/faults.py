"""
What a misbehaving host does around the enclave it hosts.

The host cannot touch enclave memory. It can swap the code it launches
after attestation, rewrite what leaves the enclave, and sign things with
its own key.
"""

import logging
from dataclasses import replace
from typing import List, Sequence, Union

from ..crypto.primitives import SealedBlob, open_with, seal_with, sign
from ..lambdas.base import PassthroughFunction
from ..lambdas.instance import StepOutcome
from ..models.proof import LambdaKind
from ..models.records import DataRecord
from ..rng import SimulationRandom
from .node import FaultBehavior, FaultKind, Node

logger = logging.getLogger(__name__)


def _active(faults: Sequence[FaultBehavior], kind: FaultKind, step_index: int) -> bool:
    return any(f.kind is kind and f.applies_to(step_index) for f in faults)


def arm_runtime_faults(
    node: Node, faults: Sequence[FaultBehavior], step_index: int, kind: LambdaKind
) -> None:
    """Substitute a passthrough for the attested function where a fault says so."""
    instance = node.instance
    if instance is None:
        return
    swap = _active(faults, FaultKind.WRONG_FUNCTION, step_index) or (
        kind is LambdaKind.DP_GATE and _active(faults, FaultKind.SKIP_DP, step_index)
    )
    instance.runtime_override = PassthroughFunction(kind) if swap else None
    if swap:
        logger.warning(f"{node.node_id} runs a substituted function at step {step_index}")


def apply_host_faults(
    node: Node,
    faults: Sequence[FaultBehavior],
    step_index: int,
    sealed_input: Union[SealedBlob, Sequence[SealedBlob]],
    outcome: StepOutcome,
    rng: SimulationRandom,
) -> StepOutcome:
    """Rewrite a step's sealed output or proof after it leaves the enclave."""
    if outcome.sealed_output is not None:
        if _active(faults, FaultKind.TAMPER_OUTPUT, step_index):
            # Assumes the host also holds the egress key.
            egress = node.instance.egress_key
            altered = open_with(egress, outcome.sealed_output) + b" "
            outcome = replace(outcome, sealed_output=seal_with(egress, altered, rng))
            logger.warning(f"{node.node_id} tampered with the output of step {step_index}")
        elif _active(faults, FaultKind.REPLAY_SEALED, step_index):
            stale = sealed_input if isinstance(sealed_input, SealedBlob) else list(sealed_input)[0]
            outcome = replace(outcome, sealed_output=stale)
            logger.warning(f"{node.node_id} replayed its input blob at step {step_index}")

    if _active(faults, FaultKind.FORGE_PROOF, step_index):
        forged = replace(outcome.proof, signature=sign(node.keypair, outcome.proof.signing_bytes()))
        outcome = replace(outcome, proof=forged)
        logger.warning(f"{node.node_id} forged the proof of step {step_index}")
    return outcome


def pod_records(node: Node) -> List[DataRecord]:
    """Records a POD contributes; a fake-data POD edits payloads after signing."""
    if not node.has_fault(FaultKind.FAKE_DATA):
        return list(node.records)
    out = []
    for rec in node.records:
        payload = dict(rec.payload)
        payload["fabricated"] = True
        out.append(replace(rec, payload=payload))
    logger.warning(f"{node.node_id} altered {len(out)} record(s) after signing")
    return out
