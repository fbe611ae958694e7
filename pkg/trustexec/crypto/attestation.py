"""
Simulated remote attestation.

A single in-process manufacturer root signs statements binding an instance
key to the measurement of the λ it runs and the node's security level.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict

from ..exceptions import AttestationUnavailable
from ..rng import SimulationRandom
from .codec import Digest, canonical_digest, canonical_encode
from .primitives import KeyPair, sign, verify

logger = logging.getLogger(__name__)

RUNTIME_TAG = "trust-lambda-runtime/1"


class SecurityLevel(Enum):
    MID_LEVEL = "MidLevel"
    HIGH_ASSURANCE = "HighAssurance"


def measure(kind: str, fn_digest: Digest) -> Digest:
    """Measurement of the λ runtime loaded with a given function."""
    return canonical_digest([RUNTIME_TAG, kind, fn_digest])


@dataclass(frozen=True)
class AttestationReport:
    instance_id: str
    measurement: Digest
    security_level: SecurityLevel
    root_signature: bytes

    def signed_bytes(self) -> bytes:
        return canonical_encode(
            ["attestation", self.instance_id, self.measurement, self.security_level]
        )


class ManufacturerRoot:
    """The simulated hardware vendor key that vouches for enclaves."""

    def __init__(self, keypair: KeyPair):
        self.keypair = keypair
        self._registered: Dict[str, SecurityLevel] = {}

    @classmethod
    def generate(cls, rng: SimulationRandom) -> "ManufacturerRoot":
        return cls(KeyPair.generate(rng))

    @property
    def public(self) -> bytes:
        return self.keypair.public

    def register(self, instance_id: str, level: SecurityLevel) -> None:
        self._registered[instance_id] = level

    def is_registered(self, instance_id: str) -> bool:
        return instance_id in self._registered

    def attest(self, instance_id: str, measurement: Digest) -> AttestationReport:
        """Sign a report over what the hardware measured for ``instance_id``."""
        level = self._registered.get(instance_id)
        if level is None:
            raise AttestationUnavailable(f"instance {instance_id[:16]} is not registered")
        unsigned = AttestationReport(instance_id, measurement, level, b"")
        return AttestationReport(
            instance_id, measurement, level, sign(self.keypair, unsigned.signed_bytes())
        )


def check_attestation(
    report: AttestationReport,
    expected_measurement: Digest,
    root_public: bytes,
) -> bool:
    if not verify(root_public, report.signed_bytes(), report.root_signature):
        logger.warning(f"Attestation for {report.instance_id[:16]} has a bad root signature")
        return False
    if report.measurement != expected_measurement:
        logger.warning(f"Attestation for {report.instance_id[:16]} has unexpected measurement")
        return False
    return True
