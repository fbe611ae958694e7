"""
Data prover λ.

Authenticates POD records before any task code sees them. Records signed by
a registered device or organisation verify; unsigned self-reported records
pass through tagged as alleged; anything whose signature fails is rejected,
counted and dropped.
"""

import logging
from typing import Any, Dict, List, Mapping, Tuple

from ..crypto.primitives import verify
from ..exceptions import DecodeError
from ..metrics import PROVER_VERDICTS
from ..models.proof import LambdaKind
from ..models.records import AuthTag, AuthVerdict, DataRecord, SourceKind
from .base import LambdaEnv, LambdaFunction

logger = logging.getLogger(__name__)


def empty_summary() -> Dict[str, int]:
    return {v.value: 0 for v in AuthVerdict}


def authenticate_record(rec: DataRecord, registry: Mapping[str, bytes]) -> AuthTag:
    if rec.source_kind is SourceKind.ALLEGED:
        return AuthTag(AuthVerdict.ALLEGED, "no verifiable source")
    if rec.source_signature is None or rec.signer is None:
        return AuthTag(AuthVerdict.REJECTED, "signed source without signature")
    public = registry.get(rec.signer)
    if public is None:
        return AuthTag(AuthVerdict.REJECTED, "unknown signer")
    if not verify(public, rec.signed_bytes(), rec.source_signature):
        return AuthTag(AuthVerdict.REJECTED, "invalid signature")
    return AuthTag(AuthVerdict.VERIFIED, f"{rec.source_kind.value} by {rec.signer[:16]}")


def prover_lambda_fn(
    batch: List[DataRecord],
    registry: Mapping[str, bytes],
) -> Tuple[List[Tuple[DataRecord, AuthTag]], Dict[str, int]]:
    """Tag every record; return the ones allowed downstream plus verdict counts."""
    validated: List[Tuple[DataRecord, AuthTag]] = []
    summary = empty_summary()
    for rec in batch:
        tag = authenticate_record(rec, registry)
        summary[tag.verdict.value] += 1
        PROVER_VERDICTS.labels(verdict=tag.verdict.value).inc()
        if tag.verdict is not AuthVerdict.REJECTED:
            validated.append((rec, tag))
    return validated, summary


class DataProverFunction(LambdaFunction):
    """Sandbox function for the genesis step."""

    kind = LambdaKind.DATA_PROVER

    def __init__(self, registry: Mapping[str, bytes]):
        self.registry = dict(registry)

    def describe(self) -> list:
        return ["data-prover/1", [[k, self.registry[k]] for k in sorted(self.registry)]]

    def apply(self, payload: Any, env: LambdaEnv) -> Dict:
        if not isinstance(payload, list):
            raise DecodeError("data prover expects a list of POD batches")
        records: List[DataRecord] = []
        participants: List[str] = []
        foreign = 0
        for batch in payload:
            try:
                pod = batch["pod"]
                batch_records = [DataRecord.from_dict(r) for r in batch["records"]]
            except (KeyError, TypeError, ValueError) as e:
                raise DecodeError(f"malformed POD batch: {e}") from e
            participants.append(pod)
            # A POD may only contribute records under its own id.
            own = [r for r in batch_records if r.pod_id == pod]
            foreign += len(batch_records) - len(own)
            records.extend(own)

        validated, summary = prover_lambda_fn(records, self.registry)
        if foreign:
            logger.warning(f"Rejected {foreign} record(s) claiming a foreign POD id")
            summary[AuthVerdict.REJECTED.value] += foreign
        logger.info(
            f"Data prover: {summary['Verified']} verified, "
            f"{summary['Alleged']} alleged, {summary['Rejected']} rejected"
        )
        return {
            "records": [
                {"pod": rec.pod_id, "payload": rec.payload, "tag": tag.to_dict()}
                for rec, tag in validated
            ],
            "summary": summary,
            "participants": participants,
        }
