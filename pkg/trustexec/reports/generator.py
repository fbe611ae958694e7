"""
Report generator.

Renders scenario outcomes, verification reports and lineage trees for
people. Nothing here carries timestamps, POD identities or payload bytes,
so reports of identical runs are identical.
"""

import logging
from typing import TYPE_CHECKING, List, Optional

from ..config import ScenarioSettings
from ..models.proof import LineageTree, VerificationReport
from ..models.task import PipelinePlan

if TYPE_CHECKING:
    from ..scenarios import ScenarioOutcome

logger = logging.getLogger(__name__)


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    if isinstance(value, list):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    return str(value)


class ReportGenerator:
    """Generates formatted reports from scenario runs."""

    def __init__(self, settings: Optional[ScenarioSettings] = None):
        self.settings = settings

    def to_markdown(self, outcome: "ScenarioOutcome") -> str:
        """
        Convert a scenario outcome to markdown.

        Args:
            outcome: The finished (or aborted) scenario run

        Returns:
            Markdown formatted string
        """
        lines = []
        lines.append(f"# Scenario Report: {outcome.name}")
        lines.append("")
        lines.append(f"- **Task:** `{outcome.task_id.hex()}`")
        lines.append(f"- **Status:** {'completed' if outcome.succeeded else 'aborted'}")
        if outcome.error:
            where = f" at step {outcome.failed_step}" if outcome.failed_step is not None else ""
            lines.append(f"- **Failure:** {outcome.error}{where}")
        lines.append("")

        if outcome.plan is not None:
            lines.extend(self._plan_section(outcome.plan))

        r = outcome.result
        if r is not None:
            lines.append("## Released Result")
            lines.append("")
            lines.append(f"- **Query:** {r.query}")
            lines.append(f"- **Released value:** {_fmt(r.released_value)}")
            if r.released_parts:
                parts = ", ".join(f"{k}={_fmt(v)}" for k, v in sorted(r.released_parts.items()))
                lines.append(f"- **Released parts:** {parts}")
            if r.scale is not None:
                lines.append(f"- **Laplace scale:** {_fmt(r.scale)}")
            lines.append(f"- **Privacy charged:** ε={_fmt(r.epsilon_charged)} to {r.pods_charged} POD(s)")
            if r.alleged_flag:
                lines.append("- *Result includes alleged (unverified) data*")
            lines.append("")

            lines.append("## Data Authenticity")
            lines.append("")
            lines.append("| Verdict | Records |")
            lines.append("|---------|---------|")
            for verdict in ("Verified", "Alleged", "Rejected"):
                lines.append(f"| {verdict} | {r.auth_summary.get(verdict, 0)} |")
            lines.append("")

            if r.deliveries:
                lines.append("## Sealed Deliveries")
                lines.append("")
                lines.append(
                    f"{len(r.deliveries)} sealed inbox entries, one per participating POD. "
                    "Entries have equal size; only their recipients can tell whether "
                    "they carry the message."
                )
                lines.append("")

        if outcome.verification is not None:
            lines.append("## Proof Chain")
            lines.append("")
            lines.append("```")
            lines.append(self.verification_text(outcome.verification))
            lines.append("```")
            lines.append("")

        if outcome.lineage is not None:
            lines.append("## Lineage")
            lines.append("")
            lines.append("```")
            lines.append(self.lineage_text(outcome.lineage))
            lines.append("```")
            lines.append("")

        return "\n".join(lines)

    def _plan_section(self, plan: PipelinePlan) -> List[str]:
        lines = ["## Pipeline", "", "| Step | Kind | Node | Function |", "|------|------|------|----------|"]
        for i, step in enumerate(plan.steps):
            lines.append(
                f"| {i} | {step.kind.value} | {step.node_id or '-'} | `{step.fn_digest.hex()[:16]}` |"
            )
        lines.append("")
        return lines

    def verification_text(self, report: VerificationReport) -> str:
        """One line per step, then the first bad step if any."""
        lines = []
        for v in report.steps:
            line = f"step {v.step_index}: {v.verdict.value}"
            if v.reason:
                line += f" ({v.reason})"
            lines.append(line)
        if report.all_ok:
            lines.append("chain ok")
        else:
            lines.append(f"first_bad_step: {report.first_bad_step}")
            lines.append(f"culprit_step: {report.culprit_step}")
        return "\n".join(lines)

    def lineage_text(self, tree: LineageTree) -> str:
        """Indented derivation tree from the traced digest down to the POD batches."""
        lines = [f"{tree.root.hex()}"]
        depth = 1
        for edge in tree.edges:
            pad = "  " * depth
            lines.append(
                f"{pad}<- step {edge.step_index} {edge.kind.value} (log line {edge.line_index})"
            )
            lines.append(f"{pad}   input {edge.input_digest.hex()}")
            depth += 1
        pad = "  " * depth
        if tree.auth_summary:
            counts = ", ".join(f"{k} {v}" for k, v in tree.auth_summary.items())
            lines.append(f"{pad}POD batches ({len(tree.leaves)}): {counts}")
        else:
            lines.append(f"{pad}inputs ({len(tree.leaves)}), no lineage manifest")
        for leaf in tree.leaves:
            lines.append(f"{pad}  {leaf.hex()}")
        return "\n".join(lines)

    def to_summary(self, outcome: "ScenarioOutcome") -> str:
        """One-line summary for the terminal."""
        if outcome.result is None:
            return f"{outcome.name}: aborted ({outcome.error})"
        r = outcome.result
        return (
            f"{outcome.name}: {r.query} = {_fmt(r.released_value)} "
            f"(verified {r.auth_summary.get('Verified', 0)}, "
            f"alleged {r.auth_summary.get('Alleged', 0)}, "
            f"rejected {r.auth_summary.get('Rejected', 0)})"
        )
