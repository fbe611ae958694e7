"""
Trust-λ instance: data validator → sandbox → proof generator, with one
sealed entry and one sealed exit.
"""

import logging
import threading
import time
from dataclasses import dataclass, replace
from typing import Any, List, Optional, Sequence, Tuple, Union

from ..crypto.attestation import SecurityLevel, measure
from ..crypto.codec import Digest, decode_payload, encode_payload, hash_bytes
from ..crypto.primitives import (
    EdgeKey,
    KeyPair,
    SealedBlob,
    open_with,
    seal_with,
    sign,
    unseal,
)
from ..exceptions import (
    AuthFailure,
    CodecError,
    DecodeError,
    DigestMismatch,
    MissingPredecessor,
    ReplayDetected,
    TrustExecError,
    UpstreamWrongFunction,
)
from ..metrics import STEP_DURATION, STEPS_EXECUTED
from ..models.proof import (
    ExecutionProof,
    FailureReason,
    LambdaKind,
    LineageManifest,
    genesis_digest,
)
from ..taskdsl import parse
from .base import LambdaEnv, LambdaFunction
from .task_exec import TaskExecFunction

logger = logging.getLogger(__name__)

SealedInput = Union[SealedBlob, Sequence[SealedBlob]]


@dataclass
class StepOutcome:
    sealed_output: Optional[SealedBlob]
    proof: ExecutionProof
    manifest: Optional[LineageManifest] = None

    @property
    def failed(self) -> bool:
        return self.proof.is_failure


def encode_key_delivery(key: EdgeKey, role: str) -> bytes:
    return encode_payload({"key_id": key.key_id, "material": key.material.hex(), "role": role})


class LambdaInstance:
    """
    One simulated enclave running a single λ function.

    Keys are installed once during setup and only read afterwards; a lock
    keeps the instance to one step at a time.
    """

    def __init__(
        self,
        keypair: KeyPair,
        kind: LambdaKind,
        function: Optional[LambdaFunction] = None,
        security_level: SecurityLevel = SecurityLevel.MID_LEVEL,
        env: Optional[LambdaEnv] = None,
    ):
        self.keypair = keypair
        self.kind = kind
        self.function = function
        self.security_level = security_level
        self.env = env
        self.ingress_key: Optional[EdgeKey] = None
        self.egress_key: Optional[EdgeKey] = None
        self.expected_prev_fn: Optional[Digest] = None
        # Set only by fault injection: code swapped in after attestation.
        self.runtime_override: Optional[LambdaFunction] = None
        self._lock = threading.Lock()

    @property
    def instance_id(self) -> str:
        return self.keypair.key_id

    @property
    def active_function(self) -> LambdaFunction:
        fn = self.runtime_override or self.function
        if fn is None:
            raise TrustExecError(f"instance {self.instance_id[:16]} has no function loaded")
        return fn

    @property
    def fn_digest(self) -> Digest:
        return self.active_function.digest

    def measurement(self) -> Digest:
        """What the hardware measures at load time: runtime plus loaded function."""
        if self.function is None:
            raise TrustExecError(f"instance {self.instance_id[:16]} has no function loaded")
        return measure(self.kind.value, self.function.digest)

    # -- setup -----------------------------------------------------------

    def load_task_code(self, sealed: SealedBlob) -> None:
        """Unseal task code addressed to this instance and load it."""
        bundle = decode_payload(unseal(self.keypair, sealed))
        self.function = TaskExecFunction(
            parse(bundle["code"]),
            final=bundle.get("final", False),
            ad_message=bundle.get("ad_message"),
        )
        logger.debug(f"Instance {self.instance_id[:16]} loaded sealed task code")

    def install_key(self, sealed: SealedBlob) -> EdgeKey:
        grant = decode_payload(unseal(self.keypair, sealed))
        key = EdgeKey(grant["key_id"], bytes.fromhex(grant["material"]))
        if grant["role"] == "ingress":
            self.ingress_key = key
        elif grant["role"] == "egress":
            self.egress_key = key
        else:
            raise DecodeError(f"unknown key role {grant['role']!r}")
        return key

    # -- the three components --------------------------------------------

    def validate_input(
        self,
        sealed_input: SealedInput,
        expected_prev: Optional[ExecutionProof],
        step_index: int,
    ) -> Tuple[Any, Digest, List[Digest]]:
        """
        Open the sealed input and bind it to the predecessor's attested output.

        Returns the decoded payload, the input digest and, at genesis, the
        digests of the POD batches.
        """
        if self.ingress_key is None:
            raise AuthFailure("no ingress key installed")
        if step_index == 0:
            blobs = [sealed_input] if isinstance(sealed_input, SealedBlob) else list(sealed_input)
            leaves = [b.digest() for b in blobs]
            if len(set(leaves)) != len(leaves):
                raise ReplayDetected("the same sealed batch was delivered twice")
            batches = [self._open(b) for b in blobs]
            return batches, genesis_digest(leaves), leaves

        if expected_prev is None:
            raise MissingPredecessor(f"no committed proof for step {step_index - 1}")
        if self.expected_prev_fn is not None and expected_prev.fn_digest != self.expected_prev_fn:
            raise UpstreamWrongFunction(
                f"step {step_index - 1} ran function {expected_prev.fn_digest.hex()[:16]}"
            )
        if not isinstance(sealed_input, SealedBlob):
            raise DecodeError("expected a single sealed input")
        plaintext = open_with(self.ingress_key, sealed_input)
        digest = hash_bytes(plaintext)
        if digest != expected_prev.output_digest:
            raise DigestMismatch(
                f"input {digest.hex()[:16]} != attested {expected_prev.output_digest.hex()[:16]}"
            )
        return self._decode(plaintext), digest, []

    def _open(self, blob: SealedBlob) -> Any:
        return self._decode(open_with(self.ingress_key, blob))

    @staticmethod
    def _decode(plaintext: bytes) -> Any:
        try:
            return decode_payload(plaintext)
        except CodecError as e:
            raise DecodeError(str(e)) from e

    def run_sandbox(self, payload: Any) -> bytes:
        """Apply the loaded function; its only effect is the returned bytes."""
        output = self.active_function.apply(payload, self.env)
        return encode_payload(output)

    def generate_proof(
        self,
        task_id: bytes,
        step_index: int,
        input_digest: Digest,
        output_digest: Digest,
        prev: Optional[ExecutionProof],
        failure: Optional[FailureReason] = None,
    ) -> ExecutionProof:
        unsigned = ExecutionProof(
            task_id=task_id,
            step_index=step_index,
            kind=self.kind,
            input_digest=input_digest,
            fn_digest=self.fn_digest,
            output_digest=output_digest,
            prev_proof_digest=prev.digest() if prev is not None else Digest.zero(),
            signer=self.instance_id,
            failure=failure,
        )
        return replace(unsigned, signature=sign(self.keypair, unsigned.signing_bytes()))

    def _manifest(
        self, task_id: bytes, input_digest: Digest, leaves: List[Digest], output: bytes
    ) -> LineageManifest:
        decoded = decode_payload(output)
        summary = decoded.get("summary", {}) if isinstance(decoded, dict) else {}
        unsigned = LineageManifest(
            task_id=task_id,
            input_digest=input_digest,
            leaves=tuple(leaves),
            verified=summary.get("Verified", 0),
            alleged=summary.get("Alleged", 0),
            rejected=summary.get("Rejected", 0),
            signer=self.instance_id,
        )
        return replace(unsigned, signature=sign(self.keypair, unsigned.signing_bytes()))

    def _expected_input(
        self, sealed_input: SealedInput, prev: Optional[ExecutionProof], step_index: int
    ) -> Digest:
        """Input digest a failure proof cites when validation did not finish."""
        if step_index > 0:
            return prev.output_digest if prev is not None else Digest.zero()
        blobs = [sealed_input] if isinstance(sealed_input, SealedBlob) else list(sealed_input)
        return genesis_digest([b.digest() for b in blobs])

    def execute_step(
        self,
        task_id: bytes,
        step_index: int,
        sealed_input: SealedInput,
        prev_proof: Optional[ExecutionProof],
    ) -> StepOutcome:
        """validate → sandbox → seal(egress) → proof; any error yields a failure proof."""
        with self._lock:
            started = time.perf_counter()
            try:
                payload, input_digest, leaves = self.validate_input(
                    sealed_input, prev_proof, step_index
                )
                output = self.run_sandbox(payload)
                if self.egress_key is None:
                    raise AuthFailure("no egress key installed")
                sealed = seal_with(self.egress_key, output, self.env.rng)
                proof = self.generate_proof(
                    task_id, step_index, input_digest, hash_bytes(output), prev_proof
                )
                manifest = None
                if self.kind is LambdaKind.DATA_PROVER:
                    manifest = self._manifest(task_id, input_digest, leaves, output)
                STEPS_EXECUTED.labels(kind=self.kind.value, status="ok").inc()
                logger.info(
                    f"Step {step_index} {self.kind.value} ok, output {proof.output_digest.hex()[:16]}"
                )
                return StepOutcome(sealed, proof, manifest)
            except (TrustExecError, KeyError, TypeError, ValueError) as e:
                reason = FailureReason.from_token(getattr(e, "reason", "DECODE_ERROR"))
                if not isinstance(e, TrustExecError):
                    reason = FailureReason.DECODE_ERROR
                proof = self.generate_proof(
                    task_id,
                    step_index,
                    self._expected_input(sealed_input, prev_proof, step_index),
                    Digest.zero(),
                    prev_proof,
                    failure=reason,
                )
                STEPS_EXECUTED.labels(kind=self.kind.value, status="failed").inc()
                logger.warning(f"Step {step_index} {self.kind.value} failed: {reason.value} ({e})")
                return StepOutcome(None, proof)
            finally:
                STEP_DURATION.labels(kind=self.kind.value).observe(time.perf_counter() - started)
