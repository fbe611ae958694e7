"""
Final-step payloads: what the consumer unseals, and the sealed POD inbox
deliveries that ride along with it.
"""

import struct
from typing import Any, Dict, Iterable, List, Optional

from ..crypto.primitives import KeyPair, SealedBlob, seal_to, unseal
from ..exceptions import DecodeError
from .base import LambdaEnv

# Every inbox plaintext has this size, so a delivery's length never reveals
# whether it carries the message.
INBOX_SIZE = 256


def inbox_deliveries(
    participants: Iterable[str],
    matched: Iterable[str],
    message: str,
    env: LambdaEnv,
) -> List[str]:
    """Seal one fixed-size inbox entry to each participating POD."""
    body = message.encode("utf-8")
    if len(body) > INBOX_SIZE - 4:
        raise DecodeError(f"inbox message exceeds {INBOX_SIZE - 4} bytes")
    matched = set(matched)
    out = []
    for pod in participants:
        content = body if pod in matched else b""
        plaintext = struct.pack(">I", len(content)) + content
        plaintext += b"\x00" * (INBOX_SIZE - len(plaintext))
        blob = seal_to(env.directory, pod, plaintext, env.rng)
        out.append(blob.to_bytes().decode("ascii"))
    return out


def read_inbox(keypair: KeyPair, blob: SealedBlob) -> Optional[str]:
    """Open an inbox entry as its POD; ``None`` for the empty marker."""
    plaintext = unseal(keypair, blob)
    (length,) = struct.unpack(">I", plaintext[:4])
    if length == 0:
        return None
    return plaintext[4 : 4 + length].decode("utf-8")


def release_payload(
    query: str,
    released: Any,
    upstream: Dict,
    *,
    parts: Optional[Dict[str, Any]] = None,
    epsilon: Optional[float] = None,
    scale: Optional[float] = None,
    deliveries: Optional[List[str]] = None,
) -> Dict:
    return {
        "mode": "release",
        "query": query,
        "released": released,
        "parts": parts,
        "epsilon": epsilon,
        "scale": scale,
        "alleged": bool(upstream.get("alleged", False)),
        "summary": upstream.get("summary", {}),
        "deliveries": deliveries or [],
    }


def matched_pods(filter_output: Dict) -> List[str]:
    """PODs with at least one record the predicate selected."""
    seen: Dict[str, None] = {}
    for pod, flag in zip(filter_output["pods"], filter_output["flags"]):
        if flag:
            seen.setdefault(pod, None)
    return list(seen)
