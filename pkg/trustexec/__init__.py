"""
Trust-λ executor - decentralized computation over personal data stores.

Tasks run as a chain of attested enclave steps (data prover, task
execution, DP gate), each committing a signed proof to a public log so
anyone can check where a task broke and trace results back to their data.
"""

from .executor import DecentralizedExecutor
from .runner import TrustExecRunner
from .scenarios import ScenarioRunner

__version__ = "0.1.0"
__all__ = ["DecentralizedExecutor", "ScenarioRunner", "TrustExecRunner"]
