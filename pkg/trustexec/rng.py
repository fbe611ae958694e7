"""Seeded randomness for reproducible simulations.

Every consumer of randomness draws from its own named stream so that adding
a key or a nonce in one place never shifts the values drawn elsewhere.
"""

import hashlib
import random

import numpy as np


def derive_seed(seed: int, label: str) -> int:
    """Derive a 64-bit child seed from a parent seed and a label."""
    material = f"{seed}:{label}".encode("utf-8")
    return int.from_bytes(hashlib.sha256(material).digest()[:8], "big")


class SimulationRandom:
    """Seeded PRNG wrapper with labelled child streams."""

    def __init__(self, seed: int):
        self.seed = seed
        self._rng = random.Random(seed)

    def randbytes(self, n: int) -> bytes:
        return self._rng.randbytes(n)

    def random(self) -> float:
        return self._rng.random()

    def randrange(self, n: int) -> int:
        return self._rng.randrange(n)

    def sample(self, population, k: int) -> list:
        return self._rng.sample(population, k)

    def stream(self, label: str) -> "SimulationRandom":
        return SimulationRandom(derive_seed(self.seed, label))

    def numpy_generator(self, label: str) -> np.random.Generator:
        return np.random.default_rng(derive_seed(self.seed, label))
