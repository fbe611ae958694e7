"""
Built-in federated-averaging λ: one round, element-wise mean of clipped
fixed-length vectors.
"""

import logging
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from ..exceptions import DecodeError, MissingField, TypeMismatch
from ..models.proof import LambdaKind
from ..taskdsl.ast import scalar_tag
from .base import LambdaEnv, LambdaFunction
from .release import release_payload
from .task_exec import upstream_context

logger = logging.getLogger(__name__)


def _vector(value: Any, field: str) -> List[float]:
    if not isinstance(value, list):
        raise TypeMismatch("fedavg", (scalar_tag(value),))
    for v in value:
        if scalar_tag(v) not in ("int", "float"):
            raise TypeMismatch("fedavg", (scalar_tag(v),))
    return [float(v) for v in value]


def fedavg(
    vectors: List[List[float]],
    clip: Optional[Tuple[float, float]] = None,
    dim: Optional[int] = None,
) -> List[float]:
    """Element-wise mean; every vector must share one length."""
    if not vectors:
        return [0.0] * (dim or 0)
    lengths = {len(v) for v in vectors}
    if len(lengths) != 1 or (dim is not None and lengths != {dim}):
        raise TypeMismatch("fedavg", tuple(f"dim={n}" for n in sorted(lengths)))
    arr = np.asarray(vectors, dtype=np.float64)
    if clip is not None:
        arr = np.clip(arr, clip[0], clip[1])
    return arr.mean(axis=0).tolist()


class FedAvgFunction(LambdaFunction):
    kind = LambdaKind.AGGREGATOR

    def __init__(
        self,
        clip: Optional[Tuple[float, float]] = None,
        field: str = "weights",
        dim: Optional[int] = None,
        final: bool = False,
    ):
        self.clip = (float(clip[0]), float(clip[1])) if clip is not None else None
        self.field = field
        self.dim = dim
        self.final = final

    def describe(self) -> list:
        return [
            "fedavg/1",
            self.field,
            self.dim,
            list(self.clip) if self.clip is not None else None,
            self.final,
        ]

    def apply(self, payload: Any, env: LambdaEnv) -> Dict:
        try:
            records = payload["records"]
            context = upstream_context(payload)
        except (KeyError, TypeError) as e:
            raise DecodeError(f"aggregator input is not a prover output: {e}") from e
        vectors = []
        for r in records:
            if self.field not in r["payload"]:
                raise MissingField(self.field)
            vectors.append(_vector(r["payload"][self.field], self.field))

        mean = fedavg(vectors, self.clip, self.dim)
        out = {
            "mode": "vector_mean",
            "value": mean,
            "n": len(vectors),
            "dim": len(mean),
            "clip": list(self.clip) if self.clip is not None else None,
            **context,
        }
        logger.info(f"Aggregated {len(vectors)} vector(s) of dimension {len(mean)}")
        if self.final:
            return release_payload("vector_mean", mean, out)
        return out
