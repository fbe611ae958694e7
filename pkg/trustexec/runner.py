"""
Trust-λ scenario runner.

Main entry point: run a scenario, verify a proof log, trace lineage.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from .config import FAULT_BEHAVIORS, SCENARIO_NAMES, FaultConfig, load_settings, resolve_seed
from .crypto.codec import Digest
from .data.proof_log import ProofLog, trace_lineage, verify_chain
from .exceptions import ConfigError, TrustExecError, UnknownDigest, UnknownTask
from .models.task import PipelinePlan
from .reports.generator import ReportGenerator
from .scenarios import EXIT_CONFIG, ScenarioRunner

logger = logging.getLogger(__name__)

EXIT_BAD_CHAIN = 1
EXIT_UNKNOWN = 4


def parse_fault(text: str) -> FaultConfig:
    """``behavior[:N]``; N is the step, or the POD for fake_data, or the node for eavesdrop_all."""
    behavior, _, arg = text.partition(":")
    if behavior not in FAULT_BEHAVIORS:
        raise ConfigError("--fault", f"unknown behavior {behavior!r}")
    entry = {"behavior": behavior}
    if arg:
        if not arg.isdigit():
            raise ConfigError("--fault", f"expected an index after ':', got {arg!r}")
        key = {"fake_data": "pod", "eavesdrop_all": "node"}.get(behavior, "step")
        entry[key] = int(arg)
    try:
        return FaultConfig(**entry)
    except ValueError as e:
        raise ConfigError("--fault", str(e)) from e


class TrustExecRunner:
    """
    Command implementations.

    Supports:
    - run / attack: execute a scenario and write its outputs
    - verify: check a proof log against a published plan
    - trace: walk lineage from a digest back to the POD batches
    """

    def __init__(self, as_json: bool = False):
        self.as_json = as_json
        self.report_generator = ReportGenerator()

    def run(
        self,
        scenario: Optional[str],
        config: Optional[str],
        seed: Optional[int],
        out_dir: str,
        faults: Sequence[FaultConfig] = (),
    ) -> int:
        settings = load_settings(config_path=config, scenario=scenario)
        runner = ScenarioRunner(settings, resolve_seed(seed, settings), out_dir, faults)
        outcome = runner.run()
        if self.as_json:
            print(json.dumps(outcome.to_dict(), indent=2, default=str))
        else:
            print(self.report_generator.to_summary(outcome))
            print(f"Outputs written to: {out_dir}")
        if not outcome.succeeded:
            print(f"error: {outcome.error}", file=sys.stderr)
        return outcome.exit_code

    def verify(self, log_path: str, task: Optional[str], plan_path: Optional[str]) -> int:
        log_file = Path(log_path)
        plan_file = Path(plan_path) if plan_path else log_file.with_name("plan.json")
        if not log_file.exists():
            raise ConfigError("--log", f"{log_file} not found")
        if not plan_file.exists():
            raise ConfigError("--plan", f"{plan_file} not found")
        with open(plan_file) as f:
            try:
                plan = PipelinePlan.from_dict(json.load(f))
            except (ValueError, KeyError, TrustExecError) as e:
                raise ConfigError("--plan", f"unreadable plan: {e}") from e

        try:
            task_id = bytes.fromhex(task) if task else plan.task_id
        except ValueError:
            raise ConfigError("--task", "task id must be hex") from None
        if task_id != plan.task_id:
            raise UnknownTask(f"plan describes task {plan.task_id.hex()}, not {task_id.hex()}")

        report = verify_chain(ProofLog(log_file), task_id, plan)
        if self.as_json:
            print(json.dumps(report.to_dict(), indent=2))
        else:
            print(self.report_generator.verification_text(report))
        return 0 if report.all_ok else EXIT_BAD_CHAIN

    def trace(self, log_path: str, digest: str) -> int:
        if not Path(log_path).exists():
            raise ConfigError("--log", f"{log_path} not found")
        tree = trace_lineage(ProofLog(log_path), Digest.from_hex(digest))
        if self.as_json:
            print(json.dumps(tree.to_dict(), indent=2))
        else:
            print(self.report_generator.lineage_text(tree))
        return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Trust-λ decentralized execution simulator"
    )
    parser.add_argument(
        "--log-level",
        default="INFO",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Logging level",
    )
    subparsers = parser.add_subparsers(dest="command", help="Command to run")

    for name, help_text in (
        ("run", "Run a scenario"),
        ("attack", "Run a scenario with injected faults"),
    ):
        p = subparsers.add_parser(name, help=help_text)
        source = p.add_mutually_exclusive_group(required=True)
        source.add_argument("--scenario", "-s", choices=SCENARIO_NAMES, help="Built-in scenario")
        source.add_argument("--config", "-c", help="Path to a scenario YAML file")
        p.add_argument("--seed", type=int, default=None, help="Seed (overrides PIXIU_SEED)")
        p.add_argument("--out", "-o", default="out", help="Output directory")
        p.add_argument("--json", action="store_true", help="Machine-readable output")
        p.add_argument(
            "--fault",
            action="append",
            default=[],
            required=name == "attack",
            help="behavior[:N], e.g. tamper_output:1 or fake_data:4",
        )

    verify_parser = subparsers.add_parser("verify", help="Verify a proof log")
    verify_parser.add_argument("--log", required=True, help="Proof log path")
    verify_parser.add_argument("--task", help="Task id (hex); defaults to the plan's")
    verify_parser.add_argument("--plan", help="Published plan (default: plan.json next to the log)")
    verify_parser.add_argument("--json", action="store_true", help="Machine-readable output")

    trace_parser = subparsers.add_parser("trace", help="Trace lineage of a digest")
    trace_parser.add_argument("--log", required=True, help="Proof log path")
    trace_parser.add_argument("--digest", required=True, help="Output digest (hex)")
    trace_parser.add_argument("--json", action="store_true", help="Machine-readable output")

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """CLI entry point."""
    parser = build_parser()
    args = parser.parse_args(argv)

    # Setup logging
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        handlers=[logging.StreamHandler(sys.stderr)],
    )

    if not args.command:
        parser.print_help()
        return EXIT_CONFIG

    runner = TrustExecRunner(as_json=args.json)
    try:
        if args.command in ("run", "attack"):
            faults = [parse_fault(f) for f in args.fault]
            return runner.run(args.scenario, args.config, args.seed, args.out, faults)
        if args.command == "verify":
            return runner.verify(args.log, args.task, args.plan)
        return runner.trace(args.log, args.digest)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (UnknownTask, UnknownDigest) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_UNKNOWN
    except TrustExecError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
