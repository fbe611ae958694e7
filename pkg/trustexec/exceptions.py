"""
Exception hierarchy for trustexec.

Step-level errors carry a ``reason`` token matching a FailureReason value so
that a trust-λ can turn any component error into a signed failure proof.
"""

from typing import Iterable, Optional, Sequence


class TrustExecError(Exception):
    """Base error for the package."""

    reason: str = "STEP_ERROR"


class ConfigError(TrustExecError):
    """Scenario configuration is malformed."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


class CodecError(TrustExecError):
    """Value cannot be canonically encoded or decoded."""

    reason = "DECODE_ERROR"


class AuthFailure(TrustExecError):
    """Authenticated decryption failed (wrong key or tampered ciphertext)."""

    reason = "AUTH_FAILURE"


class AttestationUnavailable(TrustExecError):
    """Instance key is not registered with the manufacturer root."""


class AttestationFailed(TrustExecError):
    """An instance failed owner-side attestation."""

    def __init__(self, instance_id: str, step_index: Optional[int] = None):
        self.instance_id = instance_id
        self.step_index = step_index
        super().__init__(
            f"attestation failed for instance {instance_id[:16]} (step {step_index})"
        )


# ---------------------------------------------------------------------------
# Task language
# ---------------------------------------------------------------------------


class TaskDslError(TrustExecError):
    """Base error for the task language."""


class TaskSyntaxError(TaskDslError):
    """Source text does not match the grammar."""

    def __init__(self, message: str, line: int, column: int):
        self.line = line
        self.column = column
        super().__init__(f"{message} at line {line}, column {column}")


class MissingField(TaskDslError):
    reason = "MISSING_FIELD"

    def __init__(self, path: str):
        self.path = path
        super().__init__(f"missing field: {path}")


class TypeMismatch(TaskDslError):
    reason = "TYPE_MISMATCH"

    def __init__(self, op: str, tags: Sequence[str]):
        self.op = op
        self.tags = tuple(tags)
        super().__init__(f"type mismatch in {op}: {', '.join(self.tags)}")


# ---------------------------------------------------------------------------
# Differential privacy
# ---------------------------------------------------------------------------


class InvalidScale(TrustExecError):
    reason = "SENSITIVITY_MISMATCH"


class InvalidPrivacyParams(TrustExecError):
    reason = "SENSITIVITY_MISMATCH"


class SensitivityMismatch(TrustExecError):
    reason = "SENSITIVITY_MISMATCH"


class BudgetExhausted(TrustExecError):
    """One or more PODs lack the ε needed for a charge."""

    def __init__(self, pod_ids: Iterable[str]):
        self.pod_ids = list(pod_ids)
        super().__init__(f"privacy budget exhausted for {len(self.pod_ids)} POD(s)")


# ---------------------------------------------------------------------------
# Trust-λ steps
# ---------------------------------------------------------------------------


class DigestMismatch(TrustExecError):
    reason = "DIGEST_MISMATCH"


class ReplayDetected(TrustExecError):
    reason = "REPLAY_DETECTED"


class MissingPredecessor(TrustExecError):
    reason = "MISSING_PREDECESSOR"


class UpstreamWrongFunction(TrustExecError):
    reason = "UPSTREAM_WRONG_FUNCTION"


class DecodeError(TrustExecError):
    reason = "DECODE_ERROR"


class StepFailed(TrustExecError):
    """The pipeline halted at a step; a failure proof has been committed."""

    def __init__(self, index: int, reason: str):
        self.index = index
        self.reason = reason
        super().__init__(f"step {index} failed: {reason}")


# ---------------------------------------------------------------------------
# Executor / planning
# ---------------------------------------------------------------------------


class MissingDpGate(TrustExecError):
    """DP is required but the plan cannot include a sound DP gate."""


class InsufficientNodes(TrustExecError):
    def __init__(self, kind: str):
        self.kind = kind
        super().__init__(f"no idle node available for {kind}")


# ---------------------------------------------------------------------------
# Proof log
# ---------------------------------------------------------------------------


class InvalidSignature(TrustExecError):
    """Proof signature does not verify under the instance registry."""


class ProofFormatError(TrustExecError):
    """A proof line cannot be parsed."""


class UnknownTask(TrustExecError):
    pass


class UnknownDigest(TrustExecError):
    pass


# ---------------------------------------------------------------------------
# Simulator
# ---------------------------------------------------------------------------


class ConflictingBehavior(TrustExecError):
    pass
