"""
Simulated nodes, their wire observations and injected misbehaviour.
"""

import logging
import threading
from dataclasses import dataclass
from enum import Enum
from typing import Dict, FrozenSet, List, Optional, Tuple

from ..crypto.attestation import SecurityLevel
from ..crypto.codec import decode_payload
from ..crypto.primitives import EdgeKey, KeyPair, SealedBlob, unseal
from ..lambdas.instance import LambdaInstance
from ..models.records import DataRecord

logger = logging.getLogger(__name__)


class Role(Enum):
    POD = "pod"
    INSTANCE = "instance"
    CONSUMER = "consumer"


class FaultKind(Enum):
    TAMPER_OUTPUT = "tamper_output"
    FORGE_PROOF = "forge_proof"
    WRONG_FUNCTION = "wrong_function"
    SKIP_DP = "skip_dp"
    FAKE_DATA = "fake_data"
    REPLAY_SEALED = "replay_sealed"
    EAVESDROP_ALL = "eavesdrop_all"


INTEGRITY_FAULTS = frozenset(
    {
        FaultKind.TAMPER_OUTPUT,
        FaultKind.FORGE_PROOF,
        FaultKind.WRONG_FUNCTION,
        FaultKind.SKIP_DP,
        FaultKind.REPLAY_SEALED,
    }
)


@dataclass(frozen=True)
class FaultBehavior:
    kind: FaultKind
    step: Optional[int] = None
    pod: Optional[int] = None

    def applies_to(self, step_index: int) -> bool:
        return self.step is None or self.step == step_index

    def __str__(self) -> str:
        if self.step is not None:
            return f"{self.kind.value}({self.step})"
        if self.pod is not None:
            return f"{self.kind.value}(pod-{self.pod})"
        return self.kind.value


class ObservationLog:
    """Every byte string a node's untrusted host saw on the wire."""

    def __init__(self):
        self._entries: List[Tuple[str, bytes]] = []
        self._lock = threading.Lock()

    def record(self, channel: str, data: bytes) -> None:
        with self._lock:
            self._entries.append((channel, bytes(data)))

    def entries(self) -> List[Tuple[str, bytes]]:
        with self._lock:
            return list(self._entries)

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)

    def contains(self, needle: bytes) -> bool:
        return any(needle in data for _, data in self.entries())

    def leaks_window(self, secret: bytes, size: int = 8) -> bool:
        """True if any ``size``-byte window of ``secret`` was observed."""
        if len(secret) < size:
            return self.contains(secret) if secret else False
        windows = {secret[i : i + size] for i in range(len(secret) - size + 1)}
        return any(w in data for _, data in self.entries() for w in windows)


class Node:
    """
    One participant of the simulated network.

    Execution nodes carry an enclave keypair registered with the
    manufacturer root; their host keypair is what a misbehaving host can
    sign with. PODs and the consumer act under their host keypair.
    """

    def __init__(
        self,
        node_id: str,
        roles: FrozenSet[Role],
        keypair: KeyPair,
        security_level: SecurityLevel = SecurityLevel.MID_LEVEL,
        attack_cost: int = 1,
        enclave_keypair: Optional[KeyPair] = None,
        index: int = 0,
    ):
        self.node_id = node_id
        self.roles = roles
        self.keypair = keypair
        self.security_level = security_level
        self.attack_cost = attack_cost
        self.enclave_keypair = enclave_keypair
        self.index = index
        self.observations = ObservationLog()
        self.faults: List[FaultBehavior] = []
        self.records: List[DataRecord] = []
        self.tags: Dict = {}
        self.keys: Dict[str, EdgeKey] = {}
        self.instance: Optional[LambdaInstance] = None
        self.busy = False
        # One step at a time per node.
        self.lock = threading.Lock()

    def __repr__(self) -> str:
        return f"Node({self.node_id}, {self.security_level.value})"

    @property
    def party_id(self) -> str:
        if self.enclave_keypair is not None:
            return self.enclave_keypair.key_id
        return self.keypair.key_id

    @property
    def is_high_assurance(self) -> bool:
        return self.security_level is SecurityLevel.HIGH_ASSURANCE

    def has_fault(self, kind: FaultKind) -> bool:
        return any(f.kind is kind for f in self.faults)

    @property
    def eavesdrops(self) -> bool:
        return self.has_fault(FaultKind.EAVESDROP_ALL)

    def install_edge_key(self, sealed: SealedBlob) -> EdgeKey:
        """Accept an edge key the data owner sealed to this POD or consumer."""
        grant = decode_payload(unseal(self.keypair, sealed))
        key = EdgeKey(grant["key_id"], bytes.fromhex(grant["material"]))
        self.keys[key.key_id] = key
        return key
