"""Tests for the proof log, chain verification and lineage."""

from dataclasses import replace

import pytest

from trustexec.crypto.codec import Digest, hash_bytes
from trustexec.crypto.primitives import KeyPair, sign
from trustexec.data.proof_log import ProofLog, trace_lineage, verify_chain
from trustexec.exceptions import InvalidSignature, ProofFormatError, UnknownDigest, UnknownTask
from trustexec.models.proof import (
    ExecutionProof,
    FailureReason,
    LambdaKind,
    LineageManifest,
    Verdict,
    genesis_digest,
)
from trustexec.models.task import PipelinePlan, PlanStep

TASK = b"\x01" * 16
KINDS = [LambdaKind.DATA_PROVER, LambdaKind.TASK_EXEC, LambdaKind.DP_GATE]


def _signed(key, proof):
    return replace(proof, signature=sign(key, proof.signing_bytes()))


@pytest.fixture
def signers(rng):
    return [KeyPair.generate(rng.stream(f"step{i}")) for i in range(3)]


@pytest.fixture
def consumer(rng):
    return KeyPair.generate(rng.stream("consumer"))


@pytest.fixture
def fns():
    return [hash_bytes(f"fn{i}".encode()) for i in range(3)]


@pytest.fixture
def plan(signers, consumer, fns):
    steps = [PlanStep(k, fn, instance_id=s.key_id) for k, fn, s in zip(KINDS, fns, signers)]
    return PipelinePlan(TASK, consumer.key_id, steps)


@pytest.fixture
def chain(signers, fns):
    """A valid three-step proof chain."""
    leaves = [hash_bytes(b"batch-a"), hash_bytes(b"batch-b")]
    proofs = []
    prev = None
    inp = genesis_digest(leaves)
    for i, (kind, fn, key) in enumerate(zip(KINDS, fns, signers)):
        out = hash_bytes(f"out{i}".encode())
        proof = _signed(
            key,
            ExecutionProof(
                task_id=TASK,
                step_index=i,
                kind=kind,
                input_digest=inp,
                fn_digest=fn,
                output_digest=out,
                prev_proof_digest=prev.digest() if prev else Digest.zero(),
                signer=key.key_id,
            ),
        )
        proofs.append(proof)
        prev, inp = proof, out
    manifest = LineageManifest(TASK, genesis_digest(leaves), tuple(leaves), 2, 1, 0, signers[0].key_id)
    manifest = replace(manifest, signature=sign(signers[0], manifest.signing_bytes()))
    return proofs, manifest, leaves


@pytest.fixture
def log(tmp_path, signers, consumer):
    registry = {k.key_id: k.public for k in signers + [consumer]}
    return ProofLog(tmp_path / "proofs.log", registry)


class TestProofLine:
    """Tests for the line format."""

    def test_round_trip(self, chain):
        proof = chain[0][1]
        assert ExecutionProof.from_line(proof.to_line()) == proof

    def test_line_has_nine_fields(self, chain):
        assert chain[0][0].to_line().count("|") == 8

    def test_digest_excludes_signature(self, chain):
        proof = chain[0][0]
        assert replace(proof, signature=b"\x00" * 64).digest() == proof.digest()

    def test_failure_token(self, chain):
        failed = replace(chain[0][1], failure=FailureReason.DIGEST_MISMATCH)
        assert "TASK_EXEC/DIGEST_MISMATCH" in failed.to_line()
        assert ExecutionProof.from_line(failed.to_line()).failure is FailureReason.DIGEST_MISMATCH

    @pytest.mark.parametrize("line", ["", "a|b", "zz|0|TASK_EXEC|" + "|".join(["00"] * 6)])
    def test_malformed(self, line):
        with pytest.raises(ProofFormatError):
            ExecutionProof.from_line(line)


class TestProofLog:
    """Tests for append and reading."""

    def test_append_and_find(self, log, chain):
        proofs = chain[0]
        assert [log.append(p) for p in proofs] == [0, 1, 2]
        assert len(log) == 3
        assert log.find(TASK, 1) == proofs[1]
        assert log.find(TASK, 7) is None
        assert log.proofs(b"\x02" * 16) == []

    def test_refuses_bad_signature(self, log, chain, signers):
        forged = replace(chain[0][0], signature=sign(signers[1], chain[0][0].signing_bytes()))
        with pytest.raises(InvalidSignature):
            log.append(forged)
        assert len(log) == 0
        assert not log.path.exists() or log.path.read_text() == ""

    def test_refuses_unregistered_signer(self, tmp_path, chain):
        with pytest.raises(InvalidSignature):
            ProofLog(tmp_path / "other.log").append(chain[0][0])

    def test_reopen_counts_lines(self, log, chain, tmp_path):
        for p in chain[0]:
            log.append(p)
        assert len(ProofLog(log.path)) == 3

    def test_malformed_lines_skipped(self, log, chain):
        log.append(chain[0][0])
        with open(log.path, "a") as f:
            f.write("garbage\n")
        log.append(chain[0][1])
        assert [i for i, _ in log.entries()] == [0, 2]

    def test_manifest_must_be_signed(self, log, chain):
        _, manifest, _ = chain
        log.append_manifest(manifest)
        assert log.manifests() == [manifest]
        with pytest.raises(InvalidSignature):
            log.append_manifest(replace(manifest, verified=99))

    def test_snapshot_is_content_addressed(self, log, chain, tmp_path):
        log.append(chain[0][0])
        path = log.snapshot(tmp_path / "snaps")
        assert path.name == hash_bytes(log.path.read_bytes()).hex() + ".log"


class TestVerifyChain:
    """Tests for per-step verdicts."""

    def test_all_ok(self, log, chain, plan):
        for p in chain[0]:
            log.append(p)
        report = verify_chain(log, TASK, plan)
        assert report.all_ok
        assert [v.verdict for v in report.steps] == [Verdict.OK] * 3
        assert report.culprit_step is None

    def test_unknown_task(self, log, plan):
        with pytest.raises(UnknownTask):
            verify_chain(log, TASK, plan)

    def test_missing_proof(self, log, chain, plan):
        log.append(chain[0][0])
        log.append(chain[0][2])
        report = verify_chain(log, TASK, plan)
        assert report.steps[1].verdict is Verdict.MISSING_PROOF
        assert report.first_bad_step == 1

    def test_tampered_line_bad_signature(self, log, chain, plan):
        for p in chain[0]:
            log.append(p)
        lines = log.path.read_text().splitlines(keepends=True)
        fields = lines[1].split("|")
        fields[5] = hash_bytes(b"other").hex()
        lines[1] = "|".join(fields)
        log.path.write_text("".join(lines))

        report = verify_chain(log, TASK, plan)
        assert report.steps[1].verdict is Verdict.BAD_SIGNATURE
        assert report.first_bad_step == 1

    @pytest.mark.parametrize("field", range(9))
    @pytest.mark.parametrize("line", range(3))
    def test_every_field_mutation_is_caught(self, log, chain, plan, line, field):
        for p in chain[0]:
            log.append(p)
        lines = log.path.read_text().splitlines()
        fields = lines[line].split("|")
        value = fields[field]
        if field == 1:
            fields[field] = str(int(value) + 3)
        elif field == 2:
            fields[field] = KINDS[(line + 1) % 3].value
        else:
            fields[field] = ("1" if value[0] == "0" else "0") + value[1:]
        lines[line] = "|".join(fields)
        log.path.write_text("\n".join(lines) + "\n")

        report = verify_chain(log, TASK, plan)
        assert not report.all_ok
        assert report.first_bad_step == line

    def test_broken_link(self, log, chain, plan, signers):
        proofs = chain[0]
        relinked = _signed(signers[1], replace(proofs[1], prev_proof_digest=hash_bytes(b"x")))
        for p in (proofs[0], relinked, proofs[2]):
            log.append(p)
        report = verify_chain(log, TASK, plan)
        assert report.steps[1].verdict is Verdict.BROKEN_LINK

    def test_wrong_function(self, log, chain, plan, signers):
        proofs = chain[0]
        swapped = _signed(signers[1], replace(proofs[1], fn_digest=hash_bytes(b"evil")))
        log.append(proofs[0])
        log.append(swapped)
        report = verify_chain(log, TASK, plan)
        assert report.steps[1].verdict is Verdict.WRONG_FUNCTION

    def test_failed_step_blames_predecessor(self, log, chain, plan, signers):
        proofs = chain[0]
        failed = _signed(
            signers[1],
            replace(proofs[1], output_digest=Digest.zero(), failure=FailureReason.DIGEST_MISMATCH),
        )
        log.append(proofs[0])
        log.append(failed)
        report = verify_chain(log, TASK, plan)
        assert report.steps[1].verdict is Verdict.FAILED_STEP
        assert report.steps[1].reason == "DIGEST_MISMATCH"
        assert report.culprit_step == 0

    def test_failed_step_blames_itself(self, log, chain, plan, signers):
        proofs = chain[0]
        failed = _signed(
            signers[1],
            replace(proofs[1], output_digest=Digest.zero(), failure=FailureReason.TYPE_MISMATCH),
        )
        log.append(proofs[0])
        log.append(failed)
        assert verify_chain(log, TASK, plan).culprit_step == 1

    def test_first_proof_per_step_wins(self, log, chain, plan, signers):
        proofs = chain[0]
        for p in proofs:
            log.append(p)
        log.append(_signed(signers[1], replace(proofs[1], fn_digest=hash_bytes(b"late"))))
        assert verify_chain(log, TASK, plan).all_ok

    def test_report_dict(self, log, chain, plan):
        for p in chain[0]:
            log.append(p)
        d = verify_chain(log, TASK, plan).to_dict()
        assert d["all_ok"] is True
        assert d["steps"][0] == {"step_index": 0, "verdict": "Ok", "reason": None}


class TestLineage:
    """Tests for trace_lineage."""

    def test_trace_to_batches(self, log, chain):
        proofs, manifest, leaves = chain
        for p in proofs:
            log.append(p)
        log.append_manifest(manifest)

        tree = trace_lineage(log, proofs[2].output_digest)

        assert [e.step_index for e in tree.edges] == [2, 1, 0]
        assert [e.line_index for e in tree.edges] == [2, 1, 0]
        assert tree.leaves == leaves
        assert tree.auth_summary == {"Verified": 2, "Alleged": 1, "Rejected": 0}

    def test_trace_from_middle(self, log, chain):
        proofs, manifest, _ = chain
        for p in proofs:
            log.append(p)
        log.append_manifest(manifest)
        assert len(trace_lineage(log, proofs[1].output_digest).edges) == 2

    def test_without_manifest(self, log, chain):
        proofs = chain[0]
        for p in proofs:
            log.append(p)
        tree = trace_lineage(log, proofs[2].output_digest)
        assert tree.leaves == [proofs[0].input_digest]
        assert tree.auth_summary == {}

    def test_unknown_digest(self, log, chain):
        log.append(chain[0][0])
        with pytest.raises(UnknownDigest):
            trace_lineage(log, hash_bytes(b"never"))
