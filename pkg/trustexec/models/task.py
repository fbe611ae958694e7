"""
Task, plan and result models.
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

from ..crypto.codec import Digest, canonical_digest
from ..crypto.primitives import EdgeKey, SealedBlob
from ..exceptions import InvalidPrivacyParams
from .proof import LambdaKind


class BuiltinTask(Enum):
    """Tasks the DSL cannot express, shipped as fixed λ kinds."""

    FEDAVG = "fedavg"


@dataclass(frozen=True)
class PrivacyParams:
    epsilon: float
    sensitivity: float

    def __post_init__(self):
        for name in ("epsilon", "sensitivity"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise InvalidPrivacyParams(f"{name} must be a positive finite number, got {value!r}")

    @property
    def scale(self) -> float:
        """Laplace scale b = sensitivity / epsilon."""
        return self.sensitivity / self.epsilon


@dataclass
class TaskSpec:
    """What a data consumer asks the PODs to compute."""

    task_id: bytes
    consumer: str
    code: Optional[str] = None
    builtin: Optional[BuiltinTask] = None
    selector: str = "true"
    epsilon: float = 1.0
    # Declared sensitivity; derived from the query's clip bounds when None.
    sensitivity: Optional[float] = None
    require_dp: bool = True
    pipeline_kinds: Optional[List[LambdaKind]] = None
    clip_lo: Optional[float] = None
    clip_hi: Optional[float] = None
    vector_field: str = "weights"
    dim: Optional[int] = None
    ad_message: Optional[str] = None
    high_importance: Tuple[LambdaKind, ...] = ()

    def __post_init__(self):
        if len(self.task_id) != 16:
            raise ValueError("task_id must be 16 bytes")
        if (self.code is None) == (self.builtin is None):
            raise ValueError("exactly one of code or builtin must be set")


@dataclass
class PlanStep:
    kind: LambdaKind
    fn_digest: Digest
    instance_id: Optional[str] = None
    node_id: Optional[str] = None
    # Function object held by the dispatcher; never published.
    function: Any = field(default=None, compare=False, repr=False)

    def to_dict(self) -> Dict:
        return {
            "kind": self.kind.value,
            "fn_digest": self.fn_digest.hex(),
            "instance_id": self.instance_id,
            "node_id": self.node_id,
        }


@dataclass
class PipelinePlan:
    """The agreed λ sequence for one task, published without task source."""

    task_id: bytes
    consumer: str
    steps: List[PlanStep] = field(default_factory=list)
    edge_key_ids: List[str] = field(default_factory=list)
    require_dp: bool = True

    @property
    def kinds(self) -> List[LambdaKind]:
        return [s.kind for s in self.steps]

    @property
    def is_assigned(self) -> bool:
        return all(s.instance_id is not None for s in self.steps)

    def digest(self) -> Digest:
        return canonical_digest(
            [
                self.task_id,
                self.consumer,
                [[s.kind, s.fn_digest, s.instance_id] for s in self.steps],
                self.edge_key_ids,
            ]
        )

    def signer_registry(self) -> Dict[str, bytes]:
        """Public keys of every party allowed to sign proofs for this task."""
        ids = [s.instance_id for s in self.steps if s.instance_id] + [self.consumer]
        return {party: bytes.fromhex(party) for party in ids}

    def to_dict(self) -> Dict:
        return {
            "task_id": self.task_id.hex(),
            "consumer": self.consumer,
            "require_dp": self.require_dp,
            "steps": [s.to_dict() for s in self.steps],
            "edge_key_ids": list(self.edge_key_ids),
        }

    @classmethod
    def from_dict(cls, d: Dict) -> "PipelinePlan":
        return cls(
            task_id=bytes.fromhex(d["task_id"]),
            consumer=d["consumer"],
            require_dp=d.get("require_dp", True),
            steps=[
                PlanStep(
                    kind=LambdaKind(s["kind"]),
                    fn_digest=Digest.from_hex(s["fn_digest"]),
                    instance_id=s.get("instance_id"),
                    node_id=s.get("node_id"),
                )
                for s in d["steps"]
            ],
            edge_key_ids=list(d.get("edge_key_ids", [])),
        )


@dataclass(frozen=True)
class KeyDelivery:
    """An edge key sealed to one party."""

    key_id: str
    party_id: str
    blob: SealedBlob


@dataclass
class KeyChain:
    """Edge keys K_0..K_n and their sealed deliveries."""

    edge_keys: List[EdgeKey] = field(default_factory=list)
    deliveries: List[KeyDelivery] = field(default_factory=list)

    def holders(self, key_id: str) -> List[str]:
        return [d.party_id for d in self.deliveries if d.key_id == key_id]

    @property
    def ingress(self) -> EdgeKey:
        return self.edge_keys[0]

    @property
    def egress(self) -> EdgeKey:
        return self.edge_keys[-1]


@dataclass
class TaskResult:
    """What the consumer accepts at the end of a successful pipeline."""

    task_id: bytes
    released_value: Any
    query: str
    auth_summary: Dict[str, int]
    proof_head: Digest
    output_digest: Digest
    alleged_flag: bool
    epsilon_charged: float = 0.0
    pods_charged: int = 0
    scale: Optional[float] = None
    released_parts: Optional[Dict[str, Any]] = None
    deliveries: List[SealedBlob] = field(default_factory=list)

    def to_dict(self) -> Dict:
        """Consumer-facing view; inbox deliveries are counted, not listed."""
        return {
            "task_id": self.task_id.hex(),
            "query": self.query,
            "released_value": self.released_value,
            "released_parts": self.released_parts,
            "scale": self.scale,
            "auth_summary": dict(self.auth_summary),
            "alleged_flag": self.alleged_flag,
            "epsilon_charged": self.epsilon_charged,
            "pods_charged": self.pods_charged,
            "deliveries": len(self.deliveries),
            "proof_head": self.proof_head.hex(),
            "output_digest": self.output_digest.hex(),
        }
