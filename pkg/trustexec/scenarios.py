"""
Scenario runs: one configured task over a freshly spawned network.

A run writes, under its output directory, the proof log and its lineage
sidecar, the published plan, the consumer's result, a markdown report, a
metrics dump and the PODs' sealed inbox entries.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

from .config import FaultConfig, ScenarioSettings, TaskConfig
from .crypto.codec import Digest
from .data.fixtures import FixtureRecord, load_fixture, parse_fixture
from .data.proof_log import ProofLog, trace_lineage, verify_chain
from .exceptions import (
    AttestationFailed,
    BudgetExhausted,
    ConfigError,
    InsufficientNodes,
    MissingDpGate,
    StepFailed,
    TaskDslError,
    UnknownTask,
)
from .executor import DecentralizedExecutor
from .lambdas.budget import BudgetLedger
from .metrics import write_metrics
from .models.proof import LambdaKind, LineageTree, VerificationReport
from .models.task import BuiltinTask, PipelinePlan, TaskResult, TaskSpec
from .netsim.network import Network, spawn_network
from .netsim.node import FaultBehavior, FaultKind
from .reports.generator import ReportGenerator
from .rng import SimulationRandom

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ABORTED = 2
EXIT_CONFIG = 3


def derive_task_id(seed: int, name: str) -> bytes:
    return SimulationRandom(seed).stream(f"task:{name}").randbytes(16)


def _kinds(path: str, names: Sequence[str]) -> List[LambdaKind]:
    try:
        return [LambdaKind(n.upper()) for n in names]
    except ValueError as e:
        raise ConfigError(path, str(e)) from e


def build_task_spec(task: TaskConfig, task_id: bytes, consumer: str) -> TaskSpec:
    return TaskSpec(
        task_id=task_id,
        consumer=consumer,
        code=task.code,
        builtin=BuiltinTask(task.builtin) if task.builtin else None,
        selector=task.selector,
        epsilon=task.epsilon,
        sensitivity=task.sensitivity,
        require_dp=task.require_dp,
        pipeline_kinds=(
            _kinds("task.pipeline_kinds", task.pipeline_kinds)
            if task.pipeline_kinds is not None
            else None
        ),
        clip_lo=task.clip_lo,
        clip_hi=task.clip_hi,
        vector_field=task.vector_field,
        dim=task.dim,
        ad_message=task.ad_message,
        high_importance=tuple(_kinds("task.high_importance", task.high_importance)),
    )


def fault_target(fault: FaultConfig) -> Optional[str]:
    """Node a configured fault lives on; ``None`` binds it to its step."""
    if fault.behavior == "fake_data":
        return f"pod-{fault.pod}"
    if fault.node is not None:
        return f"node-{fault.node}"
    return None


@dataclass
class ScenarioOutcome:
    name: str
    exit_code: int
    task_id: bytes
    out_dir: Path
    result: Optional[TaskResult] = None
    plan: Optional[PipelinePlan] = None
    error: Optional[str] = None
    failed_step: Optional[int] = None
    verification: Optional[VerificationReport] = None
    lineage: Optional[LineageTree] = None
    batch_digests: List[Digest] = field(default_factory=list)
    inbox_files: List[Path] = field(default_factory=list)
    network: Optional[Network] = field(default=None, repr=False)

    @property
    def succeeded(self) -> bool:
        return self.exit_code == EXIT_OK

    def to_dict(self) -> Dict:
        """What ``result.json`` holds: the consumer's view only."""
        if self.result is not None:
            return {"status": "ok", "scenario": self.name, **self.result.to_dict()}
        return {
            "status": "failed",
            "scenario": self.name,
            "task_id": self.task_id.hex(),
            "failed_step": self.failed_step,
            "error": self.error,
        }


class ScenarioRunner:
    """Runs one scenario end to end: spawn, plan, recruit, attest, execute."""

    def __init__(
        self,
        settings: ScenarioSettings,
        seed: int,
        out_dir: Union[str, Path] = "out",
        extra_faults: Sequence[FaultConfig] = (),
    ):
        self.settings = settings
        self.seed = seed
        self.out_dir = Path(out_dir)
        self.faults = list(settings.faults) + list(extra_faults)
        self.report_generator = ReportGenerator(settings)

    def _fixture_records(self) -> List[FixtureRecord]:
        pods = self.settings.pods
        records = parse_fixture(pods.records) if pods.records else []
        if pods.data_file:
            records.extend(load_fixture(pods.data_file))
        if pods.count:
            records = [r for r in records if r.pod < pods.count]
        return records

    def _pod_count(self, records: List[FixtureRecord]) -> int:
        if self.settings.pods.count:
            return self.settings.pods.count
        return max((r.pod for r in records), default=-1) + 1

    def _inject_faults(self, network: Network) -> None:
        for fault in self.faults:
            behavior = FaultBehavior(FaultKind(fault.behavior), fault.step, fault.pod)
            if fault.behavior == "eavesdrop_all" and fault.node is None:
                for node in network.executors:
                    network.inject_fault(node.node_id, behavior)
                continue
            network.inject_fault(fault_target(fault), behavior)

    def _fresh_log(self) -> ProofLog:
        path = self.out_dir / "proofs.log"
        for stale in (path, path.with_name(path.name + ".lineage")):
            stale.unlink(missing_ok=True)
        return ProofLog(path)

    def run(self) -> ScenarioOutcome:
        """
        Execute the scenario and write every output file.

        Raises:
            ConfigError: the scenario, its fixture or its faults are malformed.
        """
        self.out_dir.mkdir(parents=True, exist_ok=True)
        records = self._fixture_records()
        network = spawn_network(self.settings.network, self._pod_count(records), self.seed)
        network.load_pod_data(records, self.settings.pods.non_member_as)
        self._inject_faults(network)

        log = self._fresh_log()
        ledger = BudgetLedger(self.settings.privacy.initial_budget)
        executor = DecentralizedExecutor(network, log, ledger, self.settings.privacy.noise)
        task_id = derive_task_id(self.seed, self.settings.name)
        spec = build_task_spec(self.settings.task, task_id, network.consumer.party_id)

        outcome = ScenarioOutcome(
            name=self.settings.name,
            exit_code=EXIT_OK,
            task_id=task_id,
            out_dir=self.out_dir,
            network=network,
        )
        logger.info(f"Running scenario {self.settings.name} with seed {self.seed}")
        try:
            outcome.result = executor.run_task(spec)
        except (TaskDslError, MissingDpGate) as e:
            raise ConfigError("task", str(e)) from e
        except StepFailed as e:
            outcome.exit_code = EXIT_ABORTED
            outcome.failed_step = e.index
            outcome.error = e.reason
        except (AttestationFailed, BudgetExhausted, InsufficientNodes) as e:
            outcome.exit_code = EXIT_ABORTED
            outcome.error = f"{type(e).__name__}: {e}"
        outcome.plan = executor.plans.get(task_id)
        outcome.batch_digests = executor.batch_digests.get(task_id, [])

        if outcome.plan is not None:
            try:
                outcome.verification = verify_chain(log, task_id, outcome.plan)
            except UnknownTask:
                outcome.verification = None
        if outcome.result is not None:
            outcome.lineage = trace_lineage(log, outcome.result.output_digest)

        self._write_outputs(outcome)
        if outcome.succeeded:
            logger.info(f"Scenario {self.settings.name} completed")
        else:
            logger.error(f"Scenario {self.settings.name} aborted: {outcome.error}")
        return outcome

    def _write_outputs(self, outcome: ScenarioOutcome) -> None:
        out = self.out_dir
        if outcome.plan is not None:
            with open(out / "plan.json", "w") as f:
                json.dump(outcome.plan.to_dict(), f, indent=2)
        with open(out / "result.json", "w") as f:
            json.dump(outcome.to_dict(), f, indent=2, default=str)
        with open(out / "report.md", "w") as f:
            f.write(self.report_generator.to_markdown(outcome))
        write_metrics(out / "metrics.prom")

        inbox = out / "inbox"
        if inbox.exists():
            for stale in inbox.glob("*.sealed"):
                stale.unlink()
        if outcome.result is None or not outcome.result.deliveries:
            return
        inbox.mkdir(exist_ok=True)
        for blob in outcome.result.deliveries:
            pod = outcome.network.pod_by_party(blob.recipient)
            if pod is None:
                continue
            path = inbox / f"{pod.node_id}.sealed"
            path.write_bytes(blob.to_bytes())
            outcome.inbox_files.append(path)
        logger.info(f"Wrote {len(outcome.inbox_files)} sealed inbox file(s)")
