"""
POD data records and authenticity tags.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Optional

from ..crypto.codec import canonical_encode


class SourceKind(Enum):
    """Where a record claims to come from."""

    HARDWARE_SIGNED = "HardwareSigned"
    ORG_SIGNED = "OrgSigned"
    ALLEGED = "Alleged"


class AuthVerdict(Enum):
    VERIFIED = "Verified"
    ALLEGED = "Alleged"
    REJECTED = "Rejected"


@dataclass(frozen=True)
class AuthTag:
    verdict: AuthVerdict
    reason: str

    def to_dict(self) -> Dict:
        return {"verdict": self.verdict.value, "reason": self.reason}

    @classmethod
    def from_dict(cls, d: Dict) -> "AuthTag":
        return cls(AuthVerdict(d["verdict"]), d["reason"])


@dataclass(frozen=True)
class DataRecord:
    """A datum held by a POD, with its claimed provenance."""

    pod_id: str
    payload: Dict[str, Any]
    source_kind: SourceKind
    source_signature: Optional[bytes] = None
    signer: Optional[str] = None

    def signed_bytes(self) -> bytes:
        """Bytes a source signs: the canonical payload."""
        return canonical_encode(self.payload)

    def to_dict(self) -> Dict:
        return {
            "pod_id": self.pod_id,
            "payload": self.payload,
            "source_kind": self.source_kind.value,
            "source_signature": (
                self.source_signature.hex() if self.source_signature is not None else None
            ),
            "signer": self.signer,
        }

    @classmethod
    def from_dict(cls, d: Dict) -> "DataRecord":
        sig = d.get("source_signature")
        return cls(
            pod_id=d["pod_id"],
            payload=d["payload"],
            source_kind=SourceKind(d["source_kind"]),
            source_signature=bytes.fromhex(sig) if sig is not None else None,
            signer=d.get("signer"),
        )
