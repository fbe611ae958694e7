"""
Decentralized executor.

The data consumer acts as dispatcher: it derives the λ pipeline from the
task, recruits one enclave per step and ships the task code sealed to the
TaskExec enclave. The data owner attests every enclave before generating
the edge keys, so each step's output opens only in the next step. Steps run
strictly in order and each commits its proof before the next one starts.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from typing import Dict, List, Optional, Sequence, Tuple, Union

from .crypto.attestation import check_attestation, measure
from .crypto.codec import Digest, decode_payload, encode_payload, hash_bytes
from .crypto.primitives import EdgeKey, SealedBlob, open_with, seal_to, seal_with, sign
from .data.proof_log import ProofLog, verify_chain
from .exceptions import (
    AttestationFailed,
    AuthFailure,
    CodecError,
    InvalidSignature,
    MissingDpGate,
    MissingField,
    StepFailed,
    TrustExecError,
    UnknownTask,
)
from .lambdas.aggregator import FedAvgFunction
from .lambdas.base import LambdaEnv, LambdaFunction, NoiseSource
from .lambdas.budget import BudgetLedger
from .lambdas.data_prover import DataProverFunction
from .lambdas.dp_gate import DpGateFunction, SeededNoise, ZeroNoise
from .lambdas.instance import LambdaInstance, encode_key_delivery
from .lambdas.task_exec import TaskExecFunction
from .metrics import ATTESTATION_FAILURES
from .models.proof import (
    CONSUMER_FN_DIGEST,
    ExecutionProof,
    FailureReason,
    LambdaKind,
    Verdict,
)
from .models.task import (
    BuiltinTask,
    KeyChain,
    KeyDelivery,
    PipelinePlan,
    PlanStep,
    TaskResult,
    TaskSpec,
)
from .netsim.faults import apply_host_faults, arm_runtime_faults, pod_records
from .netsim.network import Network
from .netsim.node import Node
from .rng import SimulationRandom
from .taskdsl import evaluate, is_aggregate, parse
from .taskdsl.ast import And, Compare, Count, Exists, Expr, Literal, Mean, Not, Or, Sum

logger = logging.getLogger(__name__)

_CONSUMER_REASONS = {
    Verdict.BAD_SIGNATURE: FailureReason.BROKEN_CHAIN,
    Verdict.BROKEN_LINK: FailureReason.BROKEN_CHAIN,
    Verdict.WRONG_FUNCTION: FailureReason.UPSTREAM_WRONG_FUNCTION,
    Verdict.MISSING_PROOF: FailureReason.MISSING_PREDECESSOR,
    Verdict.FAILED_STEP: FailureReason.BROKEN_CHAIN,
}


def checked_clip(lo: float, hi: float) -> Tuple[float, float]:
    """Clip bounds must be finite with lo <= hi or sensitivity is unbounded."""
    if not (math.isfinite(lo) and math.isfinite(hi) and lo <= hi):
        raise MissingDpGate(f"clip bounds ({lo}, {hi}) do not bound sensitivity")
    return lo, hi


def is_predicate(expr: Expr) -> bool:
    if isinstance(expr, Literal):
        return isinstance(expr.value, bool)
    return isinstance(expr, (Compare, And, Or, Not, Exists))


def query_of(expr: Expr) -> str:
    """DP query the release of ``expr`` amounts to."""
    if isinstance(expr, Count) or is_predicate(expr):
        return "count"
    if isinstance(expr, Sum):
        return "sum"
    if isinstance(expr, Mean):
        return "mean"
    raise MissingDpGate("task output is not an aggregate with bounded sensitivity")


class DecentralizedExecutor:
    """Drives tasks over a simulated network: plan, recruit, attest, run, accept."""

    def __init__(
        self,
        network: Network,
        log: ProofLog,
        ledger: BudgetLedger,
        noise: str = "seeded",
    ):
        self.network = network
        self.log = log
        self.ledger = ledger
        self.noise_mode = noise
        self.rng = SimulationRandom(network.seed).stream("executor")
        self.plans: Dict[bytes, PipelinePlan] = {}
        self._task_code: Dict[bytes, str] = {}
        self._importance: Dict[bytes, Tuple[LambdaKind, ...]] = {}
        self._nodes: Dict[bytes, List[Node]] = {}
        # Digests of the sealed POD batches each task consumed.
        self.batch_digests: Dict[bytes, List[Digest]] = {}

    def _stream(self, task_id: bytes, party: str) -> SimulationRandom:
        return self.rng.stream(f"{task_id.hex()}:{party}")

    def _noise(self, task_id: bytes) -> NoiseSource:
        if self.noise_mode == "zero":
            return ZeroNoise()
        return SeededNoise(self.rng.numpy_generator(f"noise:{task_id.hex()}"))

    # ------------------------------------------------------------------
    # Planning
    # ------------------------------------------------------------------

    def plan_pipeline(self, spec: TaskSpec) -> PipelinePlan:
        """
        Derive the canonical pipeline DataProver → TaskExec | Aggregator [→ DpGate].

        Raises:
            MissingDpGate: DP is required but the release has no bounded
                sensitivity, or explicit pipeline kinds omit the gate. Also raised for
                clip bounds that are not finite or not ordered.
        """
        exec_kind = LambdaKind.AGGREGATOR if spec.builtin is BuiltinTask.FEDAVG else LambdaKind.TASK_EXEC
        with_gate = spec.require_dp
        if spec.pipeline_kinds is not None:
            kinds = list(spec.pipeline_kinds)
            if exec_kind not in kinds:
                raise MissingDpGate(f"pipeline lacks its {exec_kind.value} step")
            gate_after = LambdaKind.DP_GATE in kinds and kinds.index(LambdaKind.DP_GATE) > kinds.index(exec_kind)
            if spec.require_dp and not gate_after:
                raise MissingDpGate("DP is required but no DP gate follows the task step")
            with_gate = gate_after

        prover = DataProverFunction(self.network.trusted_signers)
        gate: Optional[DpGateFunction] = None
        body: LambdaFunction
        if spec.builtin is BuiltinTask.FEDAVG:
            clip = None
            if spec.clip_lo is not None and spec.clip_hi is not None:
                clip = checked_clip(spec.clip_lo, spec.clip_hi)
            if with_gate:
                if clip is None or not clip[0] < clip[1]:
                    raise MissingDpGate("federated averaging needs clip bounds to bound sensitivity")
                gate = DpGateFunction(spec.epsilon, "vector_mean", clip, spec.sensitivity)
            body = FedAvgFunction(clip, spec.vector_field, spec.dim, final=gate is None)
        else:
            expr = parse(spec.code)
            filter_task = not is_aggregate(expr)
            if with_gate:
                query = query_of(expr)
                clip = (
                    checked_clip(expr.clip_lo, expr.clip_hi)
                    if isinstance(expr, (Sum, Mean))
                    else None
                )
                gate = DpGateFunction(
                    spec.epsilon,
                    query,
                    clip,
                    spec.sensitivity,
                    ad_message=spec.ad_message if filter_task else None,
                )
            body = TaskExecFunction(
                expr,
                final=gate is None,
                ad_message=spec.ad_message if gate is None and filter_task else None,
            )
            self._task_code[spec.task_id] = spec.code

        steps = [
            PlanStep(LambdaKind.DATA_PROVER, prover.digest, function=prover),
            PlanStep(exec_kind, body.digest, function=body),
        ]
        if gate is not None:
            steps.append(PlanStep(LambdaKind.DP_GATE, gate.digest, function=gate))

        plan = PipelinePlan(spec.task_id, spec.consumer, steps, require_dp=spec.require_dp)
        self.plans[spec.task_id] = plan
        self._importance[spec.task_id] = tuple(spec.high_importance)
        logger.info(
            f"Planned task {spec.task_id.hex()[:8]}: "
            + " -> ".join(k.value for k in plan.kinds)
        )
        return plan

    # ------------------------------------------------------------------
    # Recruitment
    # ------------------------------------------------------------------

    def recruit_instances(self, plan: PipelinePlan) -> PipelinePlan:
        """Place each step on its own idle node and load its function."""
        task = plan.task_id
        nodes = self.network.recruit(plan.kinds, self._importance.get(task, ()))
        self._nodes[task] = nodes
        consumer = self.network.consumer
        for step, node in zip(plan.steps, nodes):
            env = LambdaEnv(
                self.network.directory,
                self._stream(task, node.node_id),
                noise=self._noise(task) if step.kind is LambdaKind.DP_GATE else None,
            )
            instance = LambdaInstance(
                node.enclave_keypair,
                step.kind,
                None if step.kind is LambdaKind.TASK_EXEC else step.function,
                node.security_level,
                env,
            )
            if step.kind is LambdaKind.TASK_EXEC:
                fn: TaskExecFunction = step.function
                bundle = encode_payload(
                    {"code": self._task_code[task], "final": fn.final, "ad_message": fn.ad_message}
                )
                sealed = seal_to(
                    self.network.directory,
                    instance.instance_id,
                    bundle,
                    self._stream(task, "consumer"),
                )
                self.network.transmit(consumer, node, sealed.to_bytes(), "task-code")
                instance.load_task_code(sealed)
            node.instance = instance
            step.instance_id = instance.instance_id
            step.node_id = node.node_id
        return plan

    # ------------------------------------------------------------------
    # Attestation and key chain
    # ------------------------------------------------------------------

    def owner_attest_and_keygen(self, plan: PipelinePlan, pods: Sequence[Node]) -> KeyChain:
        """
        Attest every enclave, then generate and deliver K_0..K_n.

        K_i goes to the two endpoints of edge i; K_0 also to every
        participating POD and K_n to the consumer. Nothing is released if
        any attestation fails.
        """
        task = plan.task_id
        for i, step in enumerate(plan.steps):
            instance = self.network.node(step.node_id).instance
            expected = measure(step.kind.value, step.fn_digest)
            try:
                report = self.network.root.attest(instance.instance_id, instance.measurement())
                ok = check_attestation(report, expected, self.network.root.public)
            except TrustExecError:
                ok = False
            if not ok:
                ATTESTATION_FAILURES.inc()
                logger.error(f"Attestation failed for step {i} on {step.node_id}; no keys released")
                raise AttestationFailed(instance.instance_id, i)

        owner = pods[0] if pods else self.network.consumer
        owner_rng = self._stream(task, "owner")
        n = len(plan.steps)
        chain = KeyChain(edge_keys=[EdgeKey.generate(i, owner_rng) for i in range(n + 1)])
        directory = self.network.directory

        def deliver(key: EdgeKey, node: Node, role: str) -> None:
            party = node.party_id
            blob = seal_to(directory, party, encode_key_delivery(key, role), owner_rng)
            self.network.transmit(owner, node, blob.to_bytes(), "key")
            if node.instance is not None and node.enclave_keypair is not None:
                node.instance.install_key(blob)
            else:
                node.install_edge_key(blob)
            chain.deliveries.append(KeyDelivery(key.key_id, party, blob))

        for pod in pods:
            deliver(chain.edge_keys[0], pod, "ingress")
        for i, step in enumerate(plan.steps):
            node = self.network.node(step.node_id)
            deliver(chain.edge_keys[i], node, "ingress")
            deliver(chain.edge_keys[i + 1], node, "egress")
            if i > 0:
                node.instance.expected_prev_fn = plan.steps[i - 1].fn_digest
        deliver(chain.edge_keys[n], self.network.consumer, "egress")

        for step in plan.steps:
            self.log.register(step.instance_id, bytes.fromhex(step.instance_id))
        self.log.register(plan.consumer, bytes.fromhex(plan.consumer))
        plan.edge_key_ids = [k.key_id for k in chain.edge_keys]
        logger.info(f"Attested {n} instance(s); delivered {len(chain.deliveries)} sealed key(s)")
        return chain

    def seal_batches(self, plan: PipelinePlan, pods: Sequence[Node]) -> List[SealedBlob]:
        """Each POD seals its records under K_0 and sends them to step 0."""
        first = self.network.node(plan.steps[0].node_id)
        k0 = plan.edge_key_ids[0]
        blobs = []
        for pod in pods:
            plaintext = encode_payload(
                {"pod": pod.party_id, "records": [r.to_dict() for r in pod_records(pod)]}
            )
            blob = seal_with(pod.keys[k0], plaintext, self._stream(plan.task_id, pod.node_id))
            self.network.transmit(pod, first, blob.to_bytes(), "edge-0")
            blobs.append(blob)
        self.batch_digests[plan.task_id] = [b.digest() for b in blobs]
        return blobs

    # ------------------------------------------------------------------
    # Execution
    # ------------------------------------------------------------------

    def run_pipeline(
        self,
        plan: PipelinePlan,
        keychain: KeyChain,
        batches: Sequence[SealedBlob],
        pods: Sequence[Node],
    ) -> TaskResult:
        """
        Run every step in order, committing each proof before the next step.

        Raises:
            BudgetExhausted: before any step runs.
            StepFailed: a step or the consumer refused; a failure proof is
                on the log.
        """
        task = plan.task_id
        gate = next((s.function for s in plan.steps if s.kind is LambdaKind.DP_GATE), None)
        epsilon = gate.epsilon_cost if gate is not None else 0.0
        if gate is not None:
            self.ledger.charge([p.party_id for p in pods], epsilon)

        sealed_input: Union[SealedBlob, Sequence[SealedBlob]] = list(batches)
        for i, step in enumerate(plan.steps):
            node = self.network.node(step.node_id)
            faults = self.network.faults_for(node, i)
            prev = self.log.find(task, i - 1) if i > 0 else None
            with node.lock:
                arm_runtime_faults(node, faults, i, step.kind)
                outcome = node.instance.execute_step(task, i, sealed_input, prev)
                outcome = apply_host_faults(
                    node, faults, i, sealed_input, outcome, self._stream(task, f"host:{node.node_id}")
                )

            try:
                self.log.append(outcome.proof)
            except InvalidSignature:
                logger.warning(f"Proof of step {i} from {node.node_id} was refused by the log")
            else:
                if outcome.manifest is not None:
                    self.log.append_manifest(outcome.manifest)
                self.network.broadcast(node, outcome.proof.to_line().encode("ascii"), "proof")

            if outcome.failed:
                raise StepFailed(i, outcome.proof.failure.value)

            receiver = (
                self.network.node(plan.steps[i + 1].node_id)
                if i + 1 < len(plan.steps)
                else self.network.consumer
            )
            self.network.transmit(node, receiver, outcome.sealed_output.to_bytes(), f"edge-{i + 1}")
            sealed_input = outcome.sealed_output

        return self._accept(plan, sealed_input, pods, epsilon)

    def _consumer_failure(
        self, plan: PipelinePlan, last: Optional[ExecutionProof], reason: FailureReason
    ) -> None:
        consumer = self.network.consumer
        unsigned = ExecutionProof(
            task_id=plan.task_id,
            step_index=len(plan.steps),
            kind=LambdaKind.CONSUMER,
            input_digest=last.output_digest if last is not None else Digest.zero(),
            fn_digest=CONSUMER_FN_DIGEST,
            output_digest=Digest.zero(),
            prev_proof_digest=last.digest() if last is not None else Digest.zero(),
            signer=consumer.party_id,
            failure=reason,
        )
        proof = replace(unsigned, signature=sign(consumer.keypair, unsigned.signing_bytes()))
        self.log.append(proof)
        self.network.broadcast(consumer, proof.to_line().encode("ascii"), "proof")
        logger.warning(f"Consumer refused task {plan.task_id.hex()[:8]}: {reason.value}")

    def _accept(
        self,
        plan: PipelinePlan,
        sealed_final: SealedBlob,
        pods: Sequence[Node],
        epsilon: float,
    ) -> TaskResult:
        """Consumer side: verify the chain, unseal with K_n, check the digest."""
        task = plan.task_id
        n = len(plan.steps)
        last = self.log.find(task, n - 1)
        reason: Optional[FailureReason] = None

        try:
            report = verify_chain(self.log, task, plan)
            if not report.all_ok:
                reason = _CONSUMER_REASONS[report.steps[report.first_bad_step].verdict]
        except UnknownTask:
            reason = FailureReason.MISSING_PREDECESSOR

        payload = None
        if reason is None:
            try:
                plaintext = open_with(self.network.consumer.keys[plan.edge_key_ids[n]], sealed_final)
                if hash_bytes(plaintext) != last.output_digest:
                    reason = FailureReason.DIGEST_MISMATCH
                else:
                    payload = decode_payload(plaintext)
                    if not isinstance(payload, dict) or payload.get("mode") != "release":
                        reason = FailureReason.DECODE_ERROR
            except AuthFailure:
                reason = FailureReason.AUTH_FAILURE
            except CodecError:
                reason = FailureReason.DECODE_ERROR

        if reason is not None:
            self._consumer_failure(plan, last, reason)
            raise StepFailed(n, reason.value)

        released = payload["released"]
        parts = payload.get("parts")
        if payload["query"] == "mean":
            if parts is None:
                raise MissingField("parts")
            released = parts["sum"] / parts["count"] if parts["count"] > 0 else 0.0

        deliveries = [SealedBlob.from_bytes(s.encode("ascii")) for s in payload.get("deliveries", [])]
        for blob in deliveries:
            pod = self.network.pod_by_party(blob.recipient)
            if pod is not None:
                self.network.transmit(self.network.consumer, pod, blob.to_bytes(), "inbox")

        result = TaskResult(
            task_id=task,
            released_value=released,
            query=payload["query"],
            auth_summary=dict(payload.get("summary", {})),
            proof_head=last.digest(),
            output_digest=last.output_digest,
            alleged_flag=bool(payload.get("alleged", False)),
            epsilon_charged=epsilon,
            pods_charged=len(pods) if epsilon > 0 else 0,
            scale=payload.get("scale"),
            released_parts=parts,
            deliveries=deliveries,
        )
        logger.info(f"Consumer accepted task {task.hex()[:8]}: {result.query} released")
        return result

    # ------------------------------------------------------------------
    # Whole tasks
    # ------------------------------------------------------------------

    def select_pods(self, selector: str) -> List[Node]:
        """PODs whose catalog tags satisfy the selector; missing tags do not match."""
        expr = parse(selector)
        chosen = []
        for pod in self.network.pods:
            try:
                if evaluate(expr, pod.tags) is True:
                    chosen.append(pod)
            except MissingField:
                continue
        return chosen

    def run_task(self, spec: TaskSpec, pods: Optional[Sequence[Node]] = None) -> TaskResult:
        pods = list(pods) if pods is not None else self.select_pods(spec.selector)
        plan = self.plan_pipeline(spec)
        try:
            self.recruit_instances(plan)
            keychain = self.owner_attest_and_keygen(plan, pods)
            batches = self.seal_batches(plan, pods)
            return self.run_pipeline(plan, keychain, batches, pods)
        finally:
            self.network.release(self._nodes.pop(plan.task_id, []))

    def run_many(
        self, specs: Sequence[TaskSpec], max_workers: int = 4
    ) -> List[Union[TaskResult, TrustExecError]]:
        """Run independent tasks concurrently; errors are returned in place."""

        def one(spec: TaskSpec) -> Union[TaskResult, TrustExecError]:
            try:
                return self.run_task(spec)
            except TrustExecError as e:
                logger.warning(f"Task {spec.task_id.hex()[:8]} failed: {e}")
                return e

        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            return list(pool.map(one, specs))
