"""Domain models."""

from .proof import (
    CONSUMER_FN_DIGEST,
    UPSTREAM_REASONS,
    ExecutionProof,
    FailureReason,
    LambdaKind,
    LineageEdge,
    LineageManifest,
    LineageTree,
    StepVerdict,
    Verdict,
    VerificationReport,
    genesis_digest,
)
from .records import AuthTag, AuthVerdict, DataRecord, SourceKind
from .task import (
    BuiltinTask,
    KeyChain,
    KeyDelivery,
    PipelinePlan,
    PlanStep,
    PrivacyParams,
    TaskResult,
    TaskSpec,
)

__all__ = [
    "CONSUMER_FN_DIGEST",
    "UPSTREAM_REASONS",
    "ExecutionProof",
    "FailureReason",
    "LambdaKind",
    "LineageEdge",
    "LineageManifest",
    "LineageTree",
    "StepVerdict",
    "Verdict",
    "VerificationReport",
    "genesis_digest",
    "AuthTag",
    "AuthVerdict",
    "DataRecord",
    "SourceKind",
    "BuiltinTask",
    "KeyChain",
    "KeyDelivery",
    "PipelinePlan",
    "PlanStep",
    "PrivacyParams",
    "TaskResult",
    "TaskSpec",
]
