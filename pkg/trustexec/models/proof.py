"""
Execution proofs, verification reports and lineage models.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

from ..crypto.codec import Digest, canonical_digest, canonical_encode, hash_bytes
from ..exceptions import ProofFormatError

TASK_ID_SIZE = 16

# Function digest the consumer cites when it refuses a result.
CONSUMER_FN_DIGEST = canonical_digest(["consumer-accept/1"])


def genesis_digest(leaves: Sequence[Digest]) -> Digest:
    """Input digest of the first step: the POD batch digests in delivery order."""
    return canonical_digest(list(leaves))


class LambdaKind(Enum):
    DATA_PROVER = "DATA_PROVER"
    TASK_EXEC = "TASK_EXEC"
    DP_GATE = "DP_GATE"
    AGGREGATOR = "AGGREGATOR"
    # Result-receiving endpoint; only ever appears on failure proofs.
    CONSUMER = "CONSUMER"


class FailureReason(Enum):
    AUTH_FAILURE = "AUTH_FAILURE"
    DIGEST_MISMATCH = "DIGEST_MISMATCH"
    REPLAY_DETECTED = "REPLAY_DETECTED"
    MISSING_PREDECESSOR = "MISSING_PREDECESSOR"
    UPSTREAM_WRONG_FUNCTION = "UPSTREAM_WRONG_FUNCTION"
    BROKEN_CHAIN = "BROKEN_CHAIN"
    DECODE_ERROR = "DECODE_ERROR"
    TYPE_MISMATCH = "TYPE_MISMATCH"
    MISSING_FIELD = "MISSING_FIELD"
    SENSITIVITY_MISMATCH = "SENSITIVITY_MISMATCH"
    STEP_ERROR = "STEP_ERROR"

    @classmethod
    def from_token(cls, token: str) -> "FailureReason":
        try:
            return cls(token)
        except ValueError:
            return cls.STEP_ERROR


# Failures that indict the data a step received rather than the step itself.
UPSTREAM_REASONS = frozenset(
    {
        FailureReason.AUTH_FAILURE,
        FailureReason.DIGEST_MISMATCH,
        FailureReason.REPLAY_DETECTED,
        FailureReason.MISSING_PREDECESSOR,
        FailureReason.UPSTREAM_WRONG_FUNCTION,
    }
)


@dataclass(frozen=True)
class ExecutionProof:
    """Signed, payload-free record of one trust-λ step."""

    task_id: bytes
    step_index: int
    kind: LambdaKind
    input_digest: Digest
    fn_digest: Digest
    output_digest: Digest
    prev_proof_digest: Digest
    signer: str
    signature: bytes = b""
    failure: Optional[FailureReason] = None

    @property
    def kind_token(self) -> str:
        if self.failure is None:
            return self.kind.value
        return f"{self.kind.value}/{self.failure.value}"

    @property
    def is_failure(self) -> bool:
        return self.failure is not None

    def signing_bytes(self) -> bytes:
        return canonical_encode(
            [
                self.task_id,
                self.step_index,
                self.kind_token,
                self.input_digest,
                self.fn_digest,
                self.output_digest,
                self.prev_proof_digest,
                self.signer,
            ]
        )

    def _unsigned_fields(self) -> List[str]:
        return [
            self.task_id.hex(),
            str(self.step_index),
            self.kind_token,
            self.input_digest.hex(),
            self.fn_digest.hex(),
            self.output_digest.hex(),
            self.prev_proof_digest.hex(),
            self.signer,
        ]

    def to_line(self) -> str:
        return "|".join(self._unsigned_fields() + [self.signature.hex()]) + "\n"

    def digest(self) -> Digest:
        """SHA-256 of the line without the signature field and newline."""
        return hash_bytes("|".join(self._unsigned_fields()).encode("ascii"))

    @classmethod
    def from_line(cls, line: str) -> "ExecutionProof":
        fields = line.rstrip("\n").split("|")
        if len(fields) != 9:
            raise ProofFormatError(f"expected 9 fields, got {len(fields)}")
        task_id, step, token, inp, fn, out, prev, signer, sig = fields
        kind_text, _, failure_text = token.partition("/")
        try:
            if not step.isdigit() or step != str(int(step)):
                raise ValueError(f"bad step index {step!r}")
            kind = LambdaKind(kind_text)
            failure = FailureReason(failure_text) if failure_text else None
            raw_task = bytes.fromhex(task_id)
            if len(raw_task) != TASK_ID_SIZE:
                raise ValueError("task id must be 16 bytes")
            return cls(
                task_id=raw_task,
                step_index=int(step),
                kind=kind,
                input_digest=Digest.from_hex(inp),
                fn_digest=Digest.from_hex(fn),
                output_digest=Digest.from_hex(out),
                prev_proof_digest=Digest.from_hex(prev),
                signer=signer,
                signature=bytes.fromhex(sig),
                failure=failure,
            )
        except Exception as e:
            raise ProofFormatError(f"malformed proof line: {e}") from e


# ---------------------------------------------------------------------------
# Verification
# ---------------------------------------------------------------------------


class Verdict(Enum):
    OK = "Ok"
    BAD_SIGNATURE = "BadSignature"
    BROKEN_LINK = "BrokenLink"
    WRONG_FUNCTION = "WrongFunction"
    MISSING_PROOF = "MissingProof"
    FAILED_STEP = "FailedStep"


@dataclass(frozen=True)
class StepVerdict:
    step_index: int
    verdict: Verdict
    reason: Optional[str] = None

    def to_dict(self) -> Dict:
        return {
            "step_index": self.step_index,
            "verdict": self.verdict.value,
            "reason": self.reason,
        }


@dataclass
class VerificationReport:
    """
    Per-step verdicts for one task's proof chain.

    ``first_bad_step`` is where the chain first stops checking out, which is
    not always the misbehaving step: a step whose output was tampered with
    or replayed commits an honest proof, and the damage shows up as the
    successor's FailedStep. Use ``culprit_step`` to name the step to blame.
    """

    task_id: bytes
    steps: List[StepVerdict] = field(default_factory=list)
    first_bad_step: Optional[int] = None

    @property
    def all_ok(self) -> bool:
        return self.first_bad_step is None

    @property
    def culprit_step(self) -> Optional[int]:
        """Step whose behaviour the first bad verdict implicates.

        A failed step whose reason blames its input points at its
        predecessor. ``None`` when the chain is clean.
        """
        if self.first_bad_step is None:
            return None
        first = self.steps[self.first_bad_step]
        if first.verdict is Verdict.FAILED_STEP and first.reason is not None:
            if FailureReason.from_token(first.reason) in UPSTREAM_REASONS:
                return max(self.first_bad_step - 1, 0)
        return self.first_bad_step

    def to_dict(self) -> Dict:
        return {
            "task_id": self.task_id.hex(),
            "all_ok": self.all_ok,
            "first_bad_step": self.first_bad_step,
            "culprit_step": self.culprit_step,
            "steps": [s.to_dict() for s in self.steps],
        }


# ---------------------------------------------------------------------------
# Lineage
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LineageManifest:
    """Signed statement by the data prover of which POD batches fed a task."""

    task_id: bytes
    input_digest: Digest
    leaves: Tuple[Digest, ...]
    verified: int
    alleged: int
    rejected: int
    signer: str
    signature: bytes = b""

    def signing_bytes(self) -> bytes:
        return canonical_encode(
            [
                "lineage",
                self.task_id,
                self.input_digest,
                list(self.leaves),
                self.verified,
                self.alleged,
                self.rejected,
                self.signer,
            ]
        )

    def to_line(self) -> str:
        return "|".join(
            [
                self.task_id.hex(),
                self.input_digest.hex(),
                ",".join(d.hex() for d in self.leaves),
                str(self.verified),
                str(self.alleged),
                str(self.rejected),
                self.signer,
                self.signature.hex(),
            ]
        ) + "\n"

    @classmethod
    def from_line(cls, line: str) -> "LineageManifest":
        try:
            task_id, inp, leaves, ver, all_, rej, signer, sig = line.rstrip("\n").split("|")
            return cls(
                task_id=bytes.fromhex(task_id),
                input_digest=Digest.from_hex(inp),
                leaves=tuple(Digest.from_hex(x) for x in leaves.split(",") if x),
                verified=int(ver),
                alleged=int(all_),
                rejected=int(rej),
                signer=signer,
                signature=bytes.fromhex(sig),
            )
        except Exception as e:
            raise ProofFormatError(f"malformed lineage line: {e}") from e


@dataclass(frozen=True)
class LineageEdge:
    """One proof-backed derivation: input digest → output digest."""

    line_index: int
    step_index: int
    kind: LambdaKind
    input_digest: Digest
    output_digest: Digest


@dataclass
class LineageTree:
    root: Digest
    task_id: bytes
    edges: List[LineageEdge] = field(default_factory=list)
    leaves: List[Digest] = field(default_factory=list)
    auth_summary: Dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> Dict:
        return {
            "root": self.root.hex(),
            "task_id": self.task_id.hex(),
            "edges": [
                {
                    "line_index": e.line_index,
                    "step_index": e.step_index,
                    "kind": e.kind.value,
                    "input_digest": e.input_digest.hex(),
                    "output_digest": e.output_digest.hex(),
                }
                for e in self.edges
            ],
            "leaves": [d.hex() for d in self.leaves],
            "auth_summary": self.auth_summary,
        }
