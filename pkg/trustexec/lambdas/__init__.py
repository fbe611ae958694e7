"""Trust-λ functions and the enclave instance that runs them."""

from .aggregator import FedAvgFunction, fedavg
from .base import LambdaEnv, LambdaFunction, NoiseSource, PassthroughFunction
from .budget import BudgetLedger
from .data_prover import DataProverFunction, authenticate_record, prover_lambda_fn
from .dp_gate import (
    DpGateFunction,
    FixedNoise,
    SeededNoise,
    ZeroNoise,
    dp_count,
    dp_sum,
    dp_vector_mean,
    laplace_sample,
    laplace_samples,
)
from .instance import LambdaInstance, StepOutcome, genesis_digest
from .release import read_inbox
from .task_exec import TaskExecFunction

__all__ = [
    "FedAvgFunction",
    "fedavg",
    "LambdaEnv",
    "LambdaFunction",
    "NoiseSource",
    "PassthroughFunction",
    "BudgetLedger",
    "DataProverFunction",
    "authenticate_record",
    "prover_lambda_fn",
    "DpGateFunction",
    "FixedNoise",
    "SeededNoise",
    "ZeroNoise",
    "dp_count",
    "dp_sum",
    "dp_vector_mean",
    "laplace_sample",
    "laplace_samples",
    "LambdaInstance",
    "StepOutcome",
    "genesis_digest",
    "read_inbox",
    "TaskExecFunction",
]
