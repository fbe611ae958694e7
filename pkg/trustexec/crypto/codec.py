"""
Canonical byte encoding and digests.

The encoding is self-describing only through the schema of the value being
encoded: strings and byte strings carry a 4-byte big-endian length prefix,
sequences a 4-byte count prefix, integers are 8-byte signed big-endian,
floats 8-byte IEEE-754 big-endian, and dataclasses are the concatenation of
their fields in declared order.
"""

import dataclasses
import hashlib
import json
import struct
from dataclasses import dataclass
from enum import Enum
from typing import Any

from ..exceptions import CodecError

DIGEST_SIZE = 32
NONE_MARKER = b"\xff\xff\xff\xff"
_INT_MIN = -(2**63)
_INT_MAX = 2**63 - 1


@dataclass(frozen=True)
class Digest:
    """32-byte SHA-256 value."""

    value: bytes

    def __post_init__(self):
        if not isinstance(self.value, (bytes, bytearray)) or len(self.value) != DIGEST_SIZE:
            raise ValueError(f"digest must be exactly {DIGEST_SIZE} bytes")

    @classmethod
    def zero(cls) -> "Digest":
        return cls(bytes(DIGEST_SIZE))

    @classmethod
    def from_hex(cls, text: str) -> "Digest":
        try:
            raw = bytes.fromhex(text)
        except ValueError as e:
            raise CodecError(f"invalid digest hex: {e}") from e
        if len(raw) != DIGEST_SIZE or text != text.lower():
            raise CodecError("digest hex must be 64 lowercase characters")
        return cls(raw)

    def hex(self) -> str:
        return self.value.hex()

    @property
    def is_zero(self) -> bool:
        return self.value == bytes(DIGEST_SIZE)

    def __str__(self) -> str:
        return self.hex()


def hash_bytes(data: bytes) -> Digest:
    """SHA-256 of ``data``."""
    return Digest(hashlib.sha256(data).digest())


def canonical_encode(value: Any) -> bytes:
    """Deterministic byte encoding of a domain value."""
    out = bytearray()
    _encode_into(value, out)
    return bytes(out)


def canonical_digest(value: Any) -> Digest:
    return hash_bytes(canonical_encode(value))


def _encode_into(value: Any, out: bytearray) -> None:
    if value is None:
        out += NONE_MARKER
    elif isinstance(value, Digest):
        out += value.value
    elif isinstance(value, Enum):
        _encode_into(value.value, out)
    elif isinstance(value, bool):
        out += b"\x01" if value else b"\x00"
    elif isinstance(value, int):
        if not _INT_MIN <= value <= _INT_MAX:
            raise CodecError(f"integer out of 64-bit range: {value}")
        out += struct.pack(">q", value)
    elif isinstance(value, float):
        out += struct.pack(">d", value)
    elif isinstance(value, str):
        raw = value.encode("utf-8")
        out += struct.pack(">I", len(raw))
        out += raw
    elif isinstance(value, (bytes, bytearray)):
        out += struct.pack(">I", len(value))
        out += bytes(value)
    elif isinstance(value, (list, tuple)):
        out += struct.pack(">I", len(value))
        for item in value:
            _encode_into(item, out)
    elif isinstance(value, dict):
        keys = list(value.keys())
        if not all(isinstance(k, str) for k in keys):
            raise CodecError("record keys must be strings")
        out += struct.pack(">I", len(keys))
        for key in sorted(keys):
            _encode_into(key, out)
            _encode_into(value[key], out)
    elif dataclasses.is_dataclass(value) and not isinstance(value, type):
        for f in dataclasses.fields(value):
            if f.metadata.get("canonical", True):
                _encode_into(getattr(value, f.name), out)
    else:
        raise CodecError(f"cannot canonically encode {type(value).__name__}")


# ---------------------------------------------------------------------------
# Payload encoding for plaintexts exchanged between steps
# ---------------------------------------------------------------------------


def encode_payload(obj: Any) -> bytes:
    """Canonical JSON bytes for a step payload."""
    try:
        text = json.dumps(
            obj,
            sort_keys=True,
            separators=(",", ":"),
            ensure_ascii=False,
            allow_nan=False,
        )
    except (TypeError, ValueError) as e:
        raise CodecError(f"payload not encodable: {e}") from e
    return text.encode("utf-8")


def decode_payload(data: bytes) -> Any:
    try:
        return json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CodecError(f"payload not decodable: {e}") from e
