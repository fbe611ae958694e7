"""
POD fixture files.

One JSON object per line::

    {"pod": 3, "tags": {"region": "eu"}, "source": "org_signed", "payload": {...}}

``source`` says how the record is signed when it is handed to its POD:
``hardware_signed`` and ``org_signed`` by a trusted signer,
``unregistered_signer`` by a key no registry knows, ``alleged`` not at all,
and ``non_member`` (survey ballots without a membership signature) either
as alleged or as an unsigned claim, per ``non_member_as``.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Union

from ..crypto.codec import canonical_encode
from ..crypto.primitives import KeyPair, sign
from ..exceptions import ConfigError
from ..models.records import DataRecord, SourceKind

logger = logging.getLogger(__name__)

SOURCES = ("hardware_signed", "org_signed", "alleged", "unregistered_signer", "non_member")


@dataclass
class FixtureRecord:
    pod: int
    source: str
    payload: Dict[str, Any]
    tags: Dict[str, Any] = field(default_factory=dict)


def parse_fixture(entries: Iterable[Mapping[str, Any]], origin: str = "pods.records") -> List[FixtureRecord]:
    out = []
    for i, entry in enumerate(entries):
        where = f"{origin}.{i}"
        if not isinstance(entry, Mapping):
            raise ConfigError(where, "fixture entry must be an object")
        pod = entry.get("pod")
        if not isinstance(pod, int) or isinstance(pod, bool) or pod < 0:
            raise ConfigError(f"{where}.pod", "must be a non-negative integer")
        source = entry.get("source", "alleged")
        if source not in SOURCES:
            raise ConfigError(f"{where}.source", f"must be one of {', '.join(SOURCES)}")
        payload = entry.get("payload")
        if not isinstance(payload, dict):
            raise ConfigError(f"{where}.payload", "must be an object")
        tags = entry.get("tags") or {}
        if not isinstance(tags, dict):
            raise ConfigError(f"{where}.tags", "must be an object")
        out.append(FixtureRecord(pod=pod, source=source, payload=payload, tags=tags))
    return out


def load_fixture(path: Union[str, Path]) -> List[FixtureRecord]:
    """Read a line-delimited JSON fixture; blank lines are ignored."""
    path = Path(path)
    if not path.exists():
        raise ConfigError("pods.data_file", f"fixture {path} not found")
    entries = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                entries.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise ConfigError(f"pods.data_file:{lineno}", f"invalid JSON: {e.msg}") from e
    records = parse_fixture(entries, origin=f"pods.data_file:{path.name}")
    logger.info(f"Loaded {len(records)} fixture record(s) from {path.name}")
    return records


def materialize(
    record: FixtureRecord,
    pod_id: str,
    signers: Mapping[str, KeyPair],
    non_member_as: str = "rejected",
) -> DataRecord:
    """Turn a fixture line into the signed record its POD holds."""
    source = record.source
    if source == "alleged" or (source == "non_member" and non_member_as == "alleged"):
        return DataRecord(pod_id, record.payload, SourceKind.ALLEGED)
    if source == "non_member":
        # Claims a membership signature it does not have.
        return DataRecord(pod_id, record.payload, SourceKind.ORG_SIGNED)

    kind = SourceKind.HARDWARE_SIGNED if source == "hardware_signed" else SourceKind.ORG_SIGNED
    signer = {
        "hardware_signed": "hardware",
        "org_signed": "org",
        "unregistered_signer": "rogue",
    }[source]
    key = signers[signer]
    signature = sign(key, canonical_encode(record.payload))
    return DataRecord(pod_id, record.payload, kind, signature, key.key_id)
