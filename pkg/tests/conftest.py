"""Pytest configuration and shared fixtures."""

from pathlib import Path

import pytest
import yaml

from trustexec.config import NetworkConfig
from trustexec.data.fixtures import parse_fixture
from trustexec.data.proof_log import ProofLog
from trustexec.executor import DecentralizedExecutor
from trustexec.lambdas.budget import BudgetLedger
from trustexec.models.task import TaskSpec
from trustexec.netsim.network import spawn_network
from trustexec.rng import SimulationRandom

FIXTURES_DIR = Path(__file__).resolve().parent.parent / "config" / "fixtures"


@pytest.fixture
def rng():
    """Seeded randomness for key and nonce generation."""
    return SimulationRandom(42)


@pytest.fixture
def ads_entries():
    """Six PODs; PODs 0 and 3 bought the console, POD 5 self-reports."""
    items = ["nintendo_switch", "kettle", "book", "nintendo_switch", "bicycle", "lamp"]
    return [
        {
            "pod": i,
            "tags": {"opted_in": True},
            "source": "alleged" if i == 5 else "org_signed",
            "payload": {"purchases": [{"item": item, "price": 10 + i}]},
        }
        for i, item in enumerate(items)
    ]


@pytest.fixture
def make_network():
    """Factory for a small seeded network loaded with fixture entries."""

    def _make(entries, node_count=4, high_assurance=1, seed=7, non_member_as="rejected"):
        records = parse_fixture(entries)
        pod_count = max((r.pod for r in records), default=-1) + 1
        network = spawn_network(
            NetworkConfig(node_count=node_count, high_assurance=high_assurance),
            pod_count,
            seed,
        )
        network.load_pod_data(records, non_member_as)
        return network

    return _make


@pytest.fixture
def make_executor(tmp_path):
    """Factory for an executor writing its proof log under ``tmp_path``."""

    def _make(network, noise="zero", budget=10.0, log_name="proofs.log"):
        log = ProofLog(tmp_path / log_name)
        return DecentralizedExecutor(network, log, BudgetLedger(budget), noise)

    return _make


@pytest.fixture
def make_spec():
    """Factory for task specs addressed to a network's consumer."""

    def _make(network, task_byte=1, **kwargs):
        kwargs.setdefault("code", 'exists(purchases, item == "nintendo_switch")')
        return TaskSpec(
            task_id=bytes([task_byte]) * 16,
            consumer=network.consumer.party_id,
            **kwargs,
        )

    return _make


@pytest.fixture
def scenario_file(tmp_path):
    """Write a scenario YAML over one of the shipped fixtures, zero noise by default."""

    def _write(fixture="ads", name="custom", **sections):
        config = {
            "name": name,
            "seed": 5,
            "pods": {"data_file": str(FIXTURES_DIR / f"{fixture}.jsonl")},
            "task": {"code": 'exists(purchases, item == "nintendo_switch")', "epsilon": 1.0},
            "network": {"node_count": 4, "high_assurance": 1},
            "privacy": {"initial_budget": 10.0, "noise": "zero"},
        }
        for key, value in sections.items():
            if isinstance(value, dict) and isinstance(config.get(key), dict):
                config[key] = {**config[key], **value}
            else:
                config[key] = value
        path = tmp_path / f"{name}.yaml"
        with open(path, "w") as f:
            yaml.safe_dump(config, f)
        return path

    return _write
