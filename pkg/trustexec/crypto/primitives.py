"""
Signatures and sealing.

Ed25519 for signatures, X25519 + HKDF-SHA256 + ChaCha20-Poly1305 for sealing
to a party, and ChaCha20-Poly1305 under per-edge symmetric keys for step
handoffs.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, Optional

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.asymmetric.x25519 import (
    X25519PrivateKey,
    X25519PublicKey,
)
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305
from cryptography.hazmat.primitives.kdf.hkdf import HKDF
from cryptography.hazmat.primitives.serialization import (
    Encoding,
    NoEncryption,
    PrivateFormat,
    PublicFormat,
)

from ..exceptions import AuthFailure, CodecError
from ..rng import SimulationRandom
from .codec import Digest, canonical_digest

logger = logging.getLogger(__name__)

KEY_SIZE = 32
AEAD_NONCE_SIZE = 12
SEAL_INFO = b"trustexec/seal/v1"


def _raw_public(key) -> bytes:
    return key.public_bytes(Encoding.Raw, PublicFormat.Raw)


@dataclass(frozen=True)
class KeyPair:
    """Ed25519 signing key plus an X25519 box key for sealing."""

    signing: Ed25519PrivateKey = field(repr=False)
    box: X25519PrivateKey = field(repr=False)

    @classmethod
    def generate(cls, rng: SimulationRandom) -> "KeyPair":
        return cls(
            signing=Ed25519PrivateKey.from_private_bytes(rng.randbytes(KEY_SIZE)),
            box=X25519PrivateKey.from_private_bytes(rng.randbytes(KEY_SIZE)),
        )

    @classmethod
    def from_secret(cls, secret: bytes, box_secret: bytes) -> "KeyPair":
        return cls(
            signing=Ed25519PrivateKey.from_private_bytes(secret),
            box=X25519PrivateKey.from_private_bytes(box_secret),
        )

    @property
    def public(self) -> bytes:
        return _raw_public(self.signing.public_key())

    @property
    def secret(self) -> bytes:
        return self.signing.private_bytes(
            Encoding.Raw, PrivateFormat.Raw, NoEncryption()
        )

    @property
    def box_public(self) -> bytes:
        return _raw_public(self.box.public_key())

    @property
    def key_id(self) -> str:
        return self.public.hex()


@dataclass(frozen=True)
class SealedBlob:
    """Authenticated ciphertext addressed to one key."""

    recipient: str
    nonce: bytes
    ciphertext: bytes

    def digest(self) -> Digest:
        return canonical_digest(self)

    def to_bytes(self) -> bytes:
        """Wire form: ``recipient|nonce|ciphertext`` in hex."""
        return f"{self.recipient}|{self.nonce.hex()}|{self.ciphertext.hex()}".encode()

    @classmethod
    def from_bytes(cls, data: bytes) -> "SealedBlob":
        try:
            recipient, nonce, ciphertext = data.decode("ascii").split("|")
            return cls(recipient, bytes.fromhex(nonce), bytes.fromhex(ciphertext))
        except (UnicodeDecodeError, ValueError) as e:
            raise CodecError(f"malformed sealed blob: {e}") from e


@dataclass(frozen=True)
class EdgeKey:
    """Symmetric key protecting one pipeline edge."""

    key_id: str
    material: bytes = field(repr=False)

    @classmethod
    def generate(cls, index: int, rng: SimulationRandom) -> "EdgeKey":
        material = rng.randbytes(KEY_SIZE)
        fingerprint = canonical_digest(["edge-key", material]).hex()[:16]
        return cls(key_id=f"K{index}:{fingerprint}", material=material)


class KeyDirectory:
    """Registry of party ids to their public box keys."""

    def __init__(self, entries: Optional[Dict[str, bytes]] = None):
        self._entries: Dict[str, bytes] = dict(entries or {})

    def register(self, keypair: KeyPair) -> str:
        self._entries[keypair.key_id] = keypair.box_public
        return keypair.key_id

    def box_key(self, party_id: str) -> bytes:
        try:
            return self._entries[party_id]
        except KeyError:
            raise AuthFailure(f"recipient {party_id[:16]} not in key directory") from None

    def __contains__(self, party_id: str) -> bool:
        return party_id in self._entries

    def ids(self) -> Iterable[str]:
        return self._entries.keys()


# ---------------------------------------------------------------------------
# Signatures
# ---------------------------------------------------------------------------


def sign(key: KeyPair, msg: bytes) -> bytes:
    return key.signing.sign(msg)


def verify(public: bytes, msg: bytes, sig: bytes) -> bool:
    """Ed25519 verification; malformed keys or signatures verify false."""
    try:
        Ed25519PublicKey.from_public_bytes(public).verify(sig, msg)
        return True
    except (InvalidSignature, ValueError, TypeError):
        return False


# ---------------------------------------------------------------------------
# Sealing to a party
# ---------------------------------------------------------------------------


def _box_cipher(shared: bytes, eph_public: bytes, recipient_box: bytes) -> ChaCha20Poly1305:
    key = HKDF(
        algorithm=hashes.SHA256(),
        length=KEY_SIZE,
        salt=None,
        info=SEAL_INFO + eph_public + recipient_box,
    ).derive(shared)
    return ChaCha20Poly1305(key)


def seal_to(
    directory: KeyDirectory,
    recipient: str,
    plaintext: bytes,
    rng: SimulationRandom,
) -> SealedBlob:
    """Encrypt ``plaintext`` so only ``recipient`` can open it."""
    recipient_box = directory.box_key(recipient)
    ephemeral = X25519PrivateKey.from_private_bytes(rng.randbytes(KEY_SIZE))
    eph_public = _raw_public(ephemeral.public_key())
    shared = ephemeral.exchange(X25519PublicKey.from_public_bytes(recipient_box))
    nonce = rng.randbytes(AEAD_NONCE_SIZE)
    cipher = _box_cipher(shared, eph_public, recipient_box)
    ciphertext = cipher.encrypt(nonce, plaintext, recipient.encode("utf-8"))
    return SealedBlob(recipient=recipient, nonce=eph_public + nonce, ciphertext=ciphertext)


def unseal(secret: KeyPair, blob: SealedBlob) -> bytes:
    if len(blob.nonce) != KEY_SIZE + AEAD_NONCE_SIZE:
        raise AuthFailure("sealed blob has malformed nonce")
    eph_public, nonce = blob.nonce[:KEY_SIZE], blob.nonce[KEY_SIZE:]
    try:
        shared = secret.box.exchange(X25519PublicKey.from_public_bytes(eph_public))
        cipher = _box_cipher(shared, eph_public, secret.box_public)
        return cipher.decrypt(nonce, blob.ciphertext, blob.recipient.encode("utf-8"))
    except (InvalidTag, ValueError) as e:
        raise AuthFailure("sealed blob failed authentication") from e


# ---------------------------------------------------------------------------
# Sealing under an edge key
# ---------------------------------------------------------------------------


def seal_with(key: EdgeKey, plaintext: bytes, rng: SimulationRandom) -> SealedBlob:
    nonce = rng.randbytes(AEAD_NONCE_SIZE)
    ciphertext = ChaCha20Poly1305(key.material).encrypt(
        nonce, plaintext, key.key_id.encode("utf-8")
    )
    return SealedBlob(recipient=key.key_id, nonce=nonce, ciphertext=ciphertext)


def open_with(key: EdgeKey, blob: SealedBlob) -> bytes:
    if blob.recipient != key.key_id or len(blob.nonce) != AEAD_NONCE_SIZE:
        raise AuthFailure("sealed blob is not addressed to this edge key")
    try:
        return ChaCha20Poly1305(key.material).decrypt(
            blob.nonce, blob.ciphertext, key.key_id.encode("utf-8")
        )
    except InvalidTag as e:
        raise AuthFailure("sealed blob failed authentication") from e
