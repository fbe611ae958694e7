"""Seeded multi-node simulator with observation logs and fault injection."""

from .faults import apply_host_faults, arm_runtime_faults, pod_records
from .network import AttackCostReport, Network, attack_cost_report, spawn_network
from .node import INTEGRITY_FAULTS, FaultBehavior, FaultKind, Node, ObservationLog, Role

__all__ = [
    "apply_host_faults",
    "arm_runtime_faults",
    "pod_records",
    "AttackCostReport",
    "Network",
    "attack_cost_report",
    "spawn_network",
    "INTEGRITY_FAULTS",
    "FaultBehavior",
    "FaultKind",
    "Node",
    "ObservationLog",
    "Role",
]
