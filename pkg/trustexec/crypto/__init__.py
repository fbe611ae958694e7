"""Canonical encoding, hashing, signatures, sealing and attestation."""

from .codec import (
    Digest,
    canonical_digest,
    canonical_encode,
    decode_payload,
    encode_payload,
    hash_bytes,
)
from .primitives import (
    EdgeKey,
    KeyDirectory,
    KeyPair,
    SealedBlob,
    open_with,
    seal_to,
    seal_with,
    sign,
    unseal,
    verify,
)
from .attestation import (
    AttestationReport,
    ManufacturerRoot,
    SecurityLevel,
    check_attestation,
    measure,
)

__all__ = [
    "Digest",
    "canonical_digest",
    "canonical_encode",
    "decode_payload",
    "encode_payload",
    "hash_bytes",
    "EdgeKey",
    "KeyDirectory",
    "KeyPair",
    "SealedBlob",
    "open_with",
    "seal_to",
    "seal_with",
    "sign",
    "unseal",
    "verify",
    "AttestationReport",
    "ManufacturerRoot",
    "SecurityLevel",
    "check_attestation",
    "measure",
]
