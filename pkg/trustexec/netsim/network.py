"""
Deterministic peer-to-peer network of PODs, execution nodes and a consumer.

Node ids and every key derive from the seed. ``transmit`` is the only way
bytes move between parties; each transfer is recorded in the sender's and
receiver's observation logs and in the log of every eavesdropping node.
"""

import logging
import threading
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence

from ..config import NetworkConfig, validate_network
from ..crypto.attestation import ManufacturerRoot, SecurityLevel
from ..crypto.primitives import KeyDirectory, KeyPair
from ..data.fixtures import FixtureRecord, materialize
from ..exceptions import ConfigError, ConflictingBehavior, InsufficientNodes
from ..models.proof import LambdaKind
from ..models.task import PipelinePlan
from ..rng import SimulationRandom
from .node import FaultBehavior, FaultKind, Node, Role

logger = logging.getLogger(__name__)

# Signers a data prover trusts; "rogue" signs but is in no registry.
TRUSTED_SIGNERS = ("hardware", "org")
SIGNER_NAMES = TRUSTED_SIGNERS + ("rogue",)


class Network:
    def __init__(
        self,
        seed: int,
        executors: Sequence[Node],
        pods: Sequence[Node],
        consumer: Node,
        root: ManufacturerRoot,
        directory: KeyDirectory,
        signers: Mapping[str, KeyPair],
        max_behaviors_per_node: int = 1,
    ):
        self.seed = seed
        self.executors = list(executors)
        self.pods = list(pods)
        self.consumer = consumer
        self.root = root
        self.directory = directory
        self.signers = dict(signers)
        self.max_behaviors_per_node = max_behaviors_per_node
        # Faults bound to a step rather than a node; they follow whichever
        # node is recruited for that step.
        self.step_faults: List[FaultBehavior] = []
        self._nodes: Dict[str, Node] = {
            n.node_id: n for n in [*self.executors, *self.pods, self.consumer]
        }
        self._recruit_lock = threading.Lock()

    # -- lookup ------------------------------------------------------------

    def node(self, node_id: str) -> Node:
        try:
            return self._nodes[node_id]
        except KeyError:
            raise ConfigError("faults.node", f"no node named {node_id!r}") from None

    @property
    def nodes(self) -> List[Node]:
        return list(self._nodes.values())

    def pod_by_party(self, party_id: str) -> Optional[Node]:
        return next((p for p in self.pods if p.party_id == party_id), None)

    @property
    def trusted_signers(self) -> Dict[str, bytes]:
        """Registry the data prover checks source signatures against."""
        return {self.signers[n].key_id: self.signers[n].public for n in TRUSTED_SIGNERS}

    def registry_snapshot(self) -> Dict[str, str]:
        """Node id to public identity; stable for a given seed."""
        out = {n.node_id: n.party_id for n in self.nodes}
        out.update({f"signer:{k}": v.key_id for k, v in self.signers.items()})
        out["manufacturer-root"] = self.root.public.hex()
        return out

    # -- wire ----------------------------------------------------------------

    def transmit(self, sender: Node, receiver: Node, data: bytes, channel: str) -> None:
        sender.observations.record(channel, data)
        if receiver is not sender:
            receiver.observations.record(channel, data)
        for node in self._nodes.values():
            if node.eavesdrops and node is not sender and node is not receiver:
                node.observations.record(channel, data)

    def broadcast(self, sender: Node, data: bytes, channel: str) -> None:
        """Publication to the public log: every node sees it."""
        for node in self._nodes.values():
            node.observations.record(channel, data)

    # -- faults ----------------------------------------------------------------

    def inject_fault(self, node_id: Optional[str], behavior: FaultBehavior) -> None:
        """
        Attach a misbehaviour to a node, or to a step when ``node_id`` is None.

        Where each behaviour surfaces in ``verify_chain``:
        - tamper_output(k), replay_sealed(k): step k's own proof is honest, so
          ``first_bad_step`` is k+1 (the successor's FailedStep). The
          successor's reason blames its input, which makes ``culprit_step`` k.
        - forge_proof(k), wrong_function(k): both ``first_bad_step`` and
          ``culprit_step`` are k.
        - skip_dp: WrongFunction at the DP gate step.
        - fake_data, eavesdrop_all: no chain verdict; the prover rejects the
          altered records, and eavesdropping only fills observation logs.

        Raises:
            ConflictingBehavior: the node already carries its maximum number
                of behaviours or one of the same kind.
        """
        if node_id is None:
            self.step_faults.append(behavior)
            logger.info(f"Injected {behavior} on whichever node runs that step")
            return
        node = self.node(node_id)
        if len(node.faults) >= self.max_behaviors_per_node or node.has_fault(behavior.kind):
            raise ConflictingBehavior(
                f"{node_id} already has {', '.join(str(f) for f in node.faults)}"
            )
        node.faults.append(behavior)
        logger.info(f"Injected {behavior} on {node_id}")

    def faults_for(self, node: Node, step_index: int) -> List[FaultBehavior]:
        return [f for f in [*node.faults, *self.step_faults] if f.applies_to(step_index)]

    # -- data ------------------------------------------------------------------

    def load_pod_data(self, records: Iterable[FixtureRecord], non_member_as: str = "rejected") -> None:
        by_index = {p.index: p for p in self.pods}
        loaded = 0
        for rec in records:
            pod = by_index.get(rec.pod)
            if pod is None:
                continue
            pod.records.append(materialize(rec, pod.party_id, self.signers, non_member_as))
            pod.tags.update(rec.tags)
            loaded += 1
        logger.info(f"Loaded {loaded} record(s) into {len(self.pods)} POD(s)")

    # -- recruitment -------------------------------------------------------------

    def recruit(
        self, kinds: Sequence[LambdaKind], high_importance: Iterable[LambdaKind] = ()
    ) -> List[Node]:
        """
        Assign one distinct idle execution node per step.

        Important steps choose first and prefer HighAssurance nodes; the rest
        prefer MidLevel nodes. Ties go to the lowest node index.
        """
        important = set(high_importance)
        order = sorted(range(len(kinds)), key=lambda i: (kinds[i] not in important, i))
        with self._recruit_lock:
            idle = [n for n in self.executors if not n.busy]
            assigned: Dict[int, Node] = {}
            for i in order:
                if not idle:
                    raise InsufficientNodes(kinds[i].value)
                wants_ha = kinds[i] in important
                node = min(idle, key=lambda n: (n.is_high_assurance != wants_ha, n.index))
                idle.remove(node)
                assigned[i] = node
            for node in assigned.values():
                node.busy = True
        nodes = [assigned[i] for i in range(len(kinds))]
        logger.info(f"Recruited {', '.join(n.node_id for n in nodes)}")
        return nodes

    def release(self, nodes: Iterable[Node]) -> None:
        with self._recruit_lock:
            for node in nodes:
                node.busy = False


def spawn_network(network: NetworkConfig, pod_count: int, seed: int) -> Network:
    """Build the node directory; ``node-i`` execution nodes, ``pod-i`` PODs."""
    validate_network(network)
    if pod_count < 0:
        raise ConfigError("pods.count", "must be non-negative")

    rng = SimulationRandom(seed)
    root = ManufacturerRoot.generate(rng.stream("manufacturer-root"))
    directory = KeyDirectory()

    first_ha = network.node_count - network.high_assurance
    executors = []
    for i in range(network.node_count):
        ha = i >= first_ha
        level = SecurityLevel.HIGH_ASSURANCE if ha else SecurityLevel.MID_LEVEL
        enclave = KeyPair.generate(rng.stream(f"node-{i}:enclave"))
        root.register(enclave.key_id, level)
        directory.register(enclave)
        executors.append(
            Node(
                f"node-{i}",
                frozenset({Role.INSTANCE}),
                KeyPair.generate(rng.stream(f"node-{i}:host")),
                security_level=level,
                attack_cost=network.high_assurance_cost if ha else network.mid_level_cost,
                enclave_keypair=enclave,
                index=i,
            )
        )

    pods = []
    for i in range(pod_count):
        keypair = KeyPair.generate(rng.stream(f"pod-{i}"))
        directory.register(keypair)
        pods.append(Node(f"pod-{i}", frozenset({Role.POD}), keypair, index=i))

    consumer_key = KeyPair.generate(rng.stream("consumer"))
    directory.register(consumer_key)
    consumer = Node("consumer", frozenset({Role.CONSUMER}), consumer_key)

    signers = {name: KeyPair.generate(rng.stream(f"signer:{name}")) for name in SIGNER_NAMES}
    logger.info(
        f"Spawned {network.node_count} execution node(s) "
        f"({network.high_assurance} HighAssurance) and {pod_count} POD(s), seed {seed}"
    )
    return Network(
        seed,
        executors,
        pods,
        consumer,
        root,
        directory,
        signers,
        network.max_behaviors_per_node,
    )


@dataclass
class AttackCostReport:
    cost: int
    leaked_scope: List[str] = field(default_factory=list)
    # True when every step of the pipeline sits on a compromised node.
    full_chain: bool = False

    def to_dict(self):
        return {"cost": self.cost, "leaked_scope": list(self.leaked_scope), "full_chain": self.full_chain}


def attack_cost_report(
    network: Network, plan: PipelinePlan, compromised: Iterable[str]
) -> AttackCostReport:
    """Price of breaking the given nodes' enclaves and what that exposes."""
    ids = sorted(set(compromised))
    cost = sum(network.node(node_id).attack_cost for node_id in ids)
    leaked = [
        f"step {i} ({step.kind.value}) on {step.node_id}: that step's input and output only"
        for i, step in enumerate(plan.steps)
        if step.node_id in ids
    ]
    full = bool(plan.steps) and len(leaked) == len(plan.steps)
    return AttackCostReport(cost=cost, leaked_scope=leaked, full_chain=full)
