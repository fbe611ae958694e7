"""
Common interface for the functions a trust-λ can run.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, List, Optional

from ..crypto.codec import Digest, canonical_digest
from ..crypto.primitives import KeyDirectory
from ..models.proof import LambdaKind
from ..rng import SimulationRandom


class NoiseSource(ABC):
    """Supplies uniform draws in the open interval (-1/2, 1/2)."""

    @abstractmethod
    def uniform(self) -> float:
        ...

    def uniforms(self, n: int) -> List[float]:
        return [self.uniform() for _ in range(n)]


@dataclass
class LambdaEnv:
    """What the enclave lends a function: key directory, nonce stream, noise."""

    directory: KeyDirectory
    rng: SimulationRandom
    noise: Optional[NoiseSource] = None


class LambdaFunction(ABC):
    """A deterministic function loaded into a trust-λ sandbox."""

    kind: LambdaKind

    @abstractmethod
    def describe(self) -> list:
        """Public configuration covered by the function digest."""

    @abstractmethod
    def apply(self, payload: Any, env: LambdaEnv) -> Any:
        ...

    @property
    def digest(self) -> Digest:
        return canonical_digest(["lambda/1", self.kind, self.describe()])


class PassthroughFunction(LambdaFunction):
    """Forwards its input untouched; what a host substitutes to skip a step."""

    def __init__(self, kind: LambdaKind):
        self.kind = kind

    def describe(self) -> list:
        return ["passthrough"]

    def apply(self, payload: Any, env: LambdaEnv) -> Any:
        return payload
