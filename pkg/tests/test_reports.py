"""Tests for report generation."""

import pytest

from trustexec.config import ScenarioSettings
from trustexec.crypto.codec import hash_bytes
from trustexec.models.proof import (
    LambdaKind,
    LineageEdge,
    LineageTree,
    StepVerdict,
    Verdict,
    VerificationReport,
)
from trustexec.reports.generator import ReportGenerator
from trustexec.scenarios import ScenarioOutcome, ScenarioRunner

TASK = b"\x03" * 16


@pytest.fixture
def generator():
    return ReportGenerator()


@pytest.fixture
def outcome(scenario_file, tmp_path):
    """A finished zero-noise ads run with an inbox message."""
    path = scenario_file(task={"ad_message": "hello"})
    return ScenarioRunner(ScenarioSettings.from_yaml(str(path)), 5, tmp_path / "out").run()


class TestToMarkdown:
    """Tests for the markdown report."""

    def test_sections(self, generator, outcome):
        markdown = generator.to_markdown(outcome)

        assert "# Scenario Report: custom" in markdown
        assert "**Status:** completed" in markdown
        for section in (
            "## Pipeline",
            "## Released Result",
            "## Data Authenticity",
            "## Sealed Deliveries",
            "## Proof Chain",
            "## Lineage",
        ):
            assert section in markdown
        assert "| Verified | 90 |" in markdown
        assert "**Released value:** 17" in markdown
        assert "alleged (unverified)" in markdown

    def test_pipeline_rows(self, generator, outcome):
        markdown = generator.to_markdown(outcome)
        assert "| 0 | DATA_PROVER |" in markdown
        assert "| 2 | DP_GATE |" in markdown

    def test_aborted_run(self, generator):
        failed = ScenarioOutcome(
            name="broken",
            exit_code=2,
            task_id=TASK,
            out_dir=None,
            error="DIGEST_MISMATCH",
            failed_step=2,
        )
        markdown = generator.to_markdown(failed)
        assert "**Status:** aborted" in markdown
        assert "DIGEST_MISMATCH at step 2" in markdown
        assert "## Released Result" not in markdown


class TestVerificationText:
    """Tests for verification_text."""

    def test_clean_chain(self, generator):
        report = VerificationReport(TASK, [StepVerdict(i, Verdict.OK) for i in range(3)])
        text = generator.verification_text(report)
        assert text.splitlines() == ["step 0: Ok", "step 1: Ok", "step 2: Ok", "chain ok"]

    def test_failed_step(self, generator):
        report = VerificationReport(
            TASK,
            [
                StepVerdict(0, Verdict.OK),
                StepVerdict(1, Verdict.FAILED_STEP, "DIGEST_MISMATCH"),
            ],
            first_bad_step=1,
        )
        text = generator.verification_text(report)
        assert "step 1: FailedStep (DIGEST_MISMATCH)" in text
        assert "first_bad_step: 1" in text
        assert "culprit_step: 0" in text


class TestLineageText:
    """Tests for lineage_text."""

    def test_tree(self, generator):
        root, mid, leaf = hash_bytes(b"out"), hash_bytes(b"mid"), hash_bytes(b"leaf")
        tree = LineageTree(
            root=root,
            task_id=TASK,
            edges=[
                LineageEdge(4, 1, LambdaKind.TASK_EXEC, mid, root),
                LineageEdge(3, 0, LambdaKind.DATA_PROVER, leaf, mid),
            ],
            leaves=[leaf],
            auth_summary={"Verified": 3, "Alleged": 0, "Rejected": 1},
        )
        lines = generator.lineage_text(tree).splitlines()
        assert lines[0] == root.hex()
        assert lines[1] == "  <- step 1 TASK_EXEC (log line 4)"
        assert "POD batches (1): Verified 3, Alleged 0, Rejected 1" in lines[-2]
        assert lines[-1].strip() == leaf.hex()

    def test_without_manifest(self, generator):
        root = hash_bytes(b"x")
        text = generator.lineage_text(LineageTree(root, TASK, leaves=[root]))
        assert "no lineage manifest" in text


class TestToSummary:
    """Tests for the one-line summary."""

    def test_completed(self, generator, outcome):
        summary = generator.to_summary(outcome)
        assert summary.startswith("custom: ")
        assert "= 17" in summary
        assert "verified 90, alleged 10, rejected 0" in summary

    def test_aborted(self, generator):
        failed = ScenarioOutcome("broken", 2, TASK, None, error="BudgetExhausted: p0")
        assert generator.to_summary(failed) == "broken: aborted (BudgetExhausted: p0)"
