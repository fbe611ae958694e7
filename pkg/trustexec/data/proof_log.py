"""
Append-only public storage of execution proofs.

The log is a line-delimited file; lineage manifests published by the data
prover go to a ``.lineage`` sidecar next to it. Verification and lineage
tracing are pure functions of the file contents plus the published plan.
"""

import logging
import os
import threading
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Tuple, Union

from ..crypto.codec import Digest, hash_bytes
from ..crypto.primitives import verify
from ..exceptions import InvalidSignature, ProofFormatError, UnknownDigest, UnknownTask
from ..metrics import CHAIN_VERIFICATIONS, PROOFS_APPENDED, PROOFS_REJECTED
from ..models.proof import (
    CONSUMER_FN_DIGEST,
    ExecutionProof,
    LambdaKind,
    LineageEdge,
    LineageManifest,
    LineageTree,
    StepVerdict,
    Verdict,
    VerificationReport,
    genesis_digest,
)
from ..models.task import PipelinePlan

logger = logging.getLogger(__name__)


class ProofLog:
    """
    Single-writer, many-reader proof log.

    ``append`` refuses any proof whose signature does not verify under the
    registered key of its signer; refused proofs never reach the file.
    """

    def __init__(
        self,
        path: Union[str, Path],
        registry: Optional[Mapping[str, bytes]] = None,
    ):
        self.path = Path(path)
        self.lineage_path = self.path.with_name(self.path.name + ".lineage")
        self.registry: Dict[str, bytes] = dict(registry or {})
        self._lock = threading.Lock()
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._count = self._line_count(self.path)

    @staticmethod
    def _line_count(path: Path) -> int:
        if not path.exists():
            return 0
        with open(path, "rb") as f:
            return sum(1 for _ in f)

    def __len__(self) -> int:
        return self._count

    def register(self, party_id: str, public: bytes) -> None:
        with self._lock:
            self.registry[party_id] = public

    def _verifies(self, signer: str, message: bytes, signature: bytes) -> bool:
        public = self.registry.get(signer)
        return public is not None and verify(public, message, signature)

    def _write(self, path: Path, line: str) -> None:
        with open(path, "a", encoding="ascii") as f:
            f.write(line)
            f.flush()
            os.fsync(f.fileno())

    def append(self, proof: ExecutionProof) -> int:
        """Append a proof and return its line index."""
        if not self._verifies(proof.signer, proof.signing_bytes(), proof.signature):
            PROOFS_REJECTED.inc()
            logger.warning(
                f"Refused proof for step {proof.step_index}: signature does not verify "
                f"under {proof.signer[:16]}"
            )
            raise InvalidSignature(f"proof for step {proof.step_index} has an invalid signature")
        with self._lock:
            self._write(self.path, proof.to_line())
            index = self._count
            self._count += 1
        PROOFS_APPENDED.inc()
        logger.debug(f"Appended proof {proof.kind_token} step {proof.step_index} at line {index}")
        return index

    def append_manifest(self, manifest: LineageManifest) -> None:
        if not self._verifies(manifest.signer, manifest.signing_bytes(), manifest.signature):
            raise InvalidSignature("lineage manifest has an invalid signature")
        with self._lock:
            self._write(self.lineage_path, manifest.to_line())

    # -- reading ---------------------------------------------------------

    def entries(self) -> List[Tuple[int, ExecutionProof]]:
        """Parsed proofs with their line indices; malformed lines are skipped."""
        if not self.path.exists():
            return []
        out = []
        with open(self.path, "r", encoding="ascii", errors="replace") as f:
            for index, line in enumerate(f):
                try:
                    out.append((index, ExecutionProof.from_line(line)))
                except ProofFormatError as e:
                    logger.warning(f"Skipping line {index} of {self.path.name}: {e}")
        return out

    def proofs(self, task_id: Optional[bytes] = None) -> List[ExecutionProof]:
        return [p for _, p in self.entries() if task_id is None or p.task_id == task_id]

    def find(self, task_id: bytes, step_index: int) -> Optional[ExecutionProof]:
        """First committed proof for a task step."""
        for _, p in self.entries():
            if p.task_id == task_id and p.step_index == step_index:
                return p
        return None

    def manifests(self) -> List[LineageManifest]:
        if not self.lineage_path.exists():
            return []
        out = []
        with open(self.lineage_path, "r", encoding="ascii", errors="replace") as f:
            for line in f:
                try:
                    out.append(LineageManifest.from_line(line))
                except ProofFormatError as e:
                    logger.warning(f"Skipping lineage line: {e}")
        return out

    def snapshot(self, directory: Union[str, Path]) -> Path:
        """Write a content-addressed copy of the log."""
        with self._lock:
            data = self.path.read_bytes() if self.path.exists() else b""
        target = Path(directory)
        target.mkdir(parents=True, exist_ok=True)
        out = target / f"{hash_bytes(data).hex()}.log"
        out.write_bytes(data)
        logger.info(f"Snapshot of {self._count} proof(s) written to {out}")
        return out


# ---------------------------------------------------------------------------
# Verification
# ---------------------------------------------------------------------------


def _check_step(
    proof: Optional[ExecutionProof],
    index: int,
    expected_signer: Optional[str],
    expected_kind: LambdaKind,
    expected_fn: Digest,
    prior: Optional[ExecutionProof],
    registry: Mapping[str, bytes],
) -> StepVerdict:
    if proof is None:
        return StepVerdict(index, Verdict.MISSING_PROOF)
    public = registry.get(proof.signer)
    if (
        proof.signer != expected_signer
        or public is None
        or not verify(public, proof.signing_bytes(), proof.signature)
    ):
        return StepVerdict(index, Verdict.BAD_SIGNATURE)
    if index == 0 and not proof.prev_proof_digest.is_zero:
        return StepVerdict(index, Verdict.BROKEN_LINK, "genesis proof has a back-link")
    if prior is not None and (
        proof.prev_proof_digest != prior.digest() or proof.input_digest != prior.output_digest
    ):
        return StepVerdict(index, Verdict.BROKEN_LINK)
    if proof.kind is not expected_kind or proof.fn_digest != expected_fn:
        return StepVerdict(index, Verdict.WRONG_FUNCTION, proof.fn_digest.hex()[:16])
    if proof.failure is not None:
        return StepVerdict(index, Verdict.FAILED_STEP, proof.failure.value)
    return StepVerdict(index, Verdict.OK)


def verify_chain(
    log: ProofLog,
    task_id: bytes,
    plan: PipelinePlan,
    registry: Optional[Mapping[str, bytes]] = None,
) -> VerificationReport:
    """
    Check every planned step in order: signature, back-link, function, presence.

    A consumer failure proof at index ``len(plan.steps)`` is reported as an
    extra step when present.
    """
    registry = registry if registry is not None else plan.signer_registry()
    task_proofs = log.proofs(task_id)
    if not task_proofs:
        raise UnknownTask(f"no proofs for task {task_id.hex()}")

    by_step: Dict[int, ExecutionProof] = {}
    for p in task_proofs:
        by_step.setdefault(p.step_index, p)

    report = VerificationReport(task_id=task_id)
    prior: Optional[ExecutionProof] = None
    for i, step in enumerate(plan.steps):
        proof = by_step.get(i)
        report.steps.append(
            _check_step(proof, i, step.instance_id, step.kind, step.fn_digest, prior, registry)
        )
        prior = proof

    n = len(plan.steps)
    consumer = by_step.get(n)
    if consumer is not None:
        report.steps.append(
            _check_step(
                consumer, n, plan.consumer, LambdaKind.CONSUMER, CONSUMER_FN_DIGEST, prior, registry
            )
        )

    report.first_bad_step = next(
        (v.step_index for v in report.steps if v.verdict is not Verdict.OK), None
    )
    CHAIN_VERIFICATIONS.labels(outcome="ok" if report.all_ok else "bad").inc()
    logger.info(
        f"Verified task {task_id.hex()[:8]}: "
        + ("all ok" if report.all_ok else f"first bad step {report.first_bad_step}")
    )
    return report


# ---------------------------------------------------------------------------
# Lineage
# ---------------------------------------------------------------------------


def _genesis_manifest(log: ProofLog, genesis: ExecutionProof) -> Optional[LineageManifest]:
    for m in log.manifests():
        if (
            m.task_id == genesis.task_id
            and m.signer == genesis.signer
            and m.input_digest == genesis.input_digest
            and verify(bytes.fromhex(m.signer), m.signing_bytes(), m.signature)
            and genesis_digest(m.leaves) == genesis.input_digest
        ):
            return m
    return None


def trace_lineage(log: ProofLog, output_digest: Digest) -> LineageTree:
    """Walk back-links from the proof that produced ``output_digest`` to genesis."""
    entries = log.entries()
    start = next(
        ((i, p) for i, p in entries if p.output_digest == output_digest and not p.is_failure),
        None,
    )
    if start is None:
        raise UnknownDigest(f"digest {output_digest.hex()} was never logged as an output")

    by_digest = {p.digest(): (i, p) for i, p in entries}
    tree = LineageTree(root=output_digest, task_id=start[1].task_id)
    seen = set()
    index, proof = start
    while True:
        seen.add(index)
        tree.edges.append(
            LineageEdge(index, proof.step_index, proof.kind, proof.input_digest, proof.output_digest)
        )
        if proof.prev_proof_digest.is_zero:
            break
        nxt = by_digest.get(proof.prev_proof_digest)
        if nxt is None or nxt[0] in seen:
            logger.warning(f"Lineage walk stopped at line {index}: predecessor not on the log")
            break
        index, proof = nxt

    manifest = _genesis_manifest(log, proof) if proof.prev_proof_digest.is_zero else None
    if manifest is not None:
        tree.leaves = list(manifest.leaves)
        tree.auth_summary = {
            "Verified": manifest.verified,
            "Alleged": manifest.alleged,
            "Rejected": manifest.rejected,
        }
    else:
        tree.leaves = [proof.input_digest]
    return tree
