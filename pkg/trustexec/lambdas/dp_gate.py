"""
Differential-privacy gate λ.

Releases aggregates only after adding Laplace noise drawn by inverse CDF from
an injectable uniform source. Count queries have sensitivity 1; clipped sums
have sensitivity ``clip_hi - clip_lo``; element-wise means of ``n`` clipped
vectors of dimension ``d`` have L1 sensitivity ``d * (clip_hi - clip_lo) / n``.
"""

import logging
import math
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..exceptions import (
    InvalidScale,
    SensitivityMismatch,
    TrustExecError,
    TypeMismatch,
)
from ..models.proof import LambdaKind
from ..models.task import PrivacyParams
from .base import LambdaEnv, LambdaFunction, NoiseSource
from .release import inbox_deliveries, matched_pods, release_payload

logger = logging.getLogger(__name__)

QUERIES = ("count", "sum", "mean", "vector_mean")


def _check_scale(b: float) -> None:
    if not (isinstance(b, (int, float)) and math.isfinite(b) and b > 0):
        raise InvalidScale(f"Laplace scale must be positive, got {b!r}")


def laplace_sample(b: float, u: float) -> float:
    """Inverse-CDF Laplace draw: -b * sign(u) * ln(1 - 2|u|)."""
    _check_scale(b)
    if not -0.5 < u < 0.5:
        raise ValueError(f"u must lie in (-1/2, 1/2), got {u}")
    if u == 0:
        return 0.0
    return -b * math.copysign(1.0, u) * math.log1p(-2.0 * abs(u))


def laplace_samples(b: float, u: np.ndarray) -> np.ndarray:
    """Vectorised ``laplace_sample``."""
    _check_scale(b)
    u = np.asarray(u, dtype=np.float64)
    if u.size and not (np.all(u > -0.5) and np.all(u < 0.5)):
        raise ValueError("u must lie in (-1/2, 1/2)")
    return -b * np.sign(u) * np.log1p(-2.0 * np.abs(u))


# ---------------------------------------------------------------------------
# Noise sources
# ---------------------------------------------------------------------------


class SeededNoise(NoiseSource):
    """Uniform draws from a seeded numpy generator."""

    def __init__(self, generator: np.random.Generator):
        self._gen = generator

    def uniform(self) -> float:
        while True:
            u = float(self._gen.uniform(-0.5, 0.5))
            if u != -0.5:
                return u

    def uniforms(self, n: int) -> List[float]:
        u = self._gen.uniform(-0.5, 0.5, size=n)
        # uniform() is half-open; redraw the closed endpoint.
        while np.any(u == -0.5):
            bad = u == -0.5
            u[bad] = self._gen.uniform(-0.5, 0.5, size=int(bad.sum()))
        return u.tolist()


class ZeroNoise(NoiseSource):
    def uniform(self) -> float:
        return 0.0


class FixedNoise(NoiseSource):
    """Replays a fixed sequence of uniforms, cycling."""

    def __init__(self, values: Sequence[float]):
        if not values:
            raise ValueError("FixedNoise needs at least one value")
        self._values = list(values)
        self._pos = 0

    def uniform(self) -> float:
        u = self._values[self._pos % len(self._values)]
        self._pos += 1
        return u


# ---------------------------------------------------------------------------
# Mechanisms
# ---------------------------------------------------------------------------


def dp_count(count: int, params: PrivacyParams, noise: NoiseSource) -> float:
    if not math.isclose(params.sensitivity, 1.0):
        raise SensitivityMismatch(
            f"counting queries have sensitivity 1, got {params.sensitivity}"
        )
    return float(count) + laplace_sample(params.scale, noise.uniform())


def dp_sum(
    clipped_sum: float,
    clip_lo: float,
    clip_hi: float,
    params: PrivacyParams,
    noise: NoiseSource,
) -> float:
    if not clip_lo < clip_hi:
        raise SensitivityMismatch(f"clip bounds [{clip_lo}, {clip_hi}] are empty")
    if not math.isclose(params.sensitivity, clip_hi - clip_lo):
        raise SensitivityMismatch(
            f"sensitivity {params.sensitivity} does not match clip width {clip_hi - clip_lo}"
        )
    return float(clipped_sum) + laplace_sample(params.scale, noise.uniform())


def vector_mean_sensitivity(dim: int, n: int, clip_lo: float, clip_hi: float) -> float:
    return dim * (clip_hi - clip_lo) / max(n, 1)


def dp_vector_mean(
    mean: Sequence[float],
    n: int,
    clip_lo: float,
    clip_hi: float,
    params: PrivacyParams,
    noise: NoiseSource,
) -> List[float]:
    expected = vector_mean_sensitivity(len(mean), n, clip_lo, clip_hi)
    if not math.isclose(params.sensitivity, expected):
        raise SensitivityMismatch(
            f"sensitivity {params.sensitivity} does not match L1 bound {expected}"
        )
    u = np.asarray(noise.uniforms(len(mean)), dtype=np.float64)
    noisy = np.asarray(mean, dtype=np.float64) + laplace_samples(params.scale, u)
    return noisy.tolist()


# ---------------------------------------------------------------------------
# λ function
# ---------------------------------------------------------------------------


class DpGateFunction(LambdaFunction):
    """The release step: noise the upstream aggregate, optionally deliver."""

    kind = LambdaKind.DP_GATE

    def __init__(
        self,
        epsilon: float,
        query: str,
        clip: Optional[Tuple[float, float]] = None,
        declared_sensitivity: Optional[float] = None,
        ad_message: Optional[str] = None,
    ):
        if query not in QUERIES:
            raise ValueError(f"unknown DP query {query!r}")
        # Validates ε up front.
        PrivacyParams(epsilon, 1.0)
        self.epsilon = float(epsilon)
        self.query = query
        self.clip = (float(clip[0]), float(clip[1])) if clip is not None else None
        self.declared_sensitivity = declared_sensitivity
        self.ad_message = ad_message

    @property
    def epsilon_cost(self) -> float:
        """ε charged per task; a mean is released as two queries."""
        return 2 * self.epsilon if self.query == "mean" else self.epsilon

    def describe(self) -> list:
        return [
            "dp-gate/1",
            self.epsilon,
            self.query,
            list(self.clip) if self.clip is not None else None,
            self.declared_sensitivity,
            self.ad_message is not None,
            self.ad_message or "",
        ]

    def _params(self, natural: float) -> PrivacyParams:
        sensitivity = self.declared_sensitivity if self.declared_sensitivity is not None else natural
        return PrivacyParams(self.epsilon, sensitivity)

    def _check_clip(self, clip: Sequence[float]) -> Tuple[float, float]:
        lo, hi = float(clip[0]), float(clip[1])
        if self.clip is not None and (lo, hi) != self.clip:
            raise SensitivityMismatch(f"upstream clip [{lo}, {hi}] differs from gate clip {list(self.clip)}")
        return lo, hi

    def apply(self, payload: Any, env: LambdaEnv) -> Dict:
        if env.noise is None:
            raise TrustExecError("DP gate started without a noise source")
        if not isinstance(payload, dict):
            raise TypeMismatch("dp_gate", ("record", type(payload).__name__))
        mode = payload.get("mode")
        parts = payload.get("parts") or {}
        got = {"filter": "count", "vector_mean": "vector_mean"}.get(mode, parts.get("op"))
        if got != self.query:
            raise TypeMismatch("dp_gate", (self.query, str(got)))

        released: Any = None
        released_parts = None
        if self.query == "count":
            count = payload["count"] if mode == "filter" else parts["value"]
            params = self._params(1.0)
            released = dp_count(count, params, env.noise)
        elif self.query == "sum":
            lo, hi = self._check_clip(parts["clip"])
            params = self._params(hi - lo)
            released = dp_sum(parts["value"], lo, hi, params, env.noise)
        elif self.query == "mean":
            lo, hi = self._check_clip(parts["clip"])
            params = self._params(hi - lo)
            released_parts = {
                "sum": dp_sum(parts["sum"], lo, hi, params, env.noise),
                "count": dp_count(parts["count"], PrivacyParams(self.epsilon, 1.0), env.noise),
            }
        else:
            lo, hi = self._check_clip(payload["clip"])
            params = self._params(
                vector_mean_sensitivity(payload["dim"], payload["n"], lo, hi)
            )
            released = dp_vector_mean(payload["value"], payload["n"], lo, hi, params, env.noise)

        deliveries = None
        if self.ad_message is not None and mode == "filter":
            deliveries = inbox_deliveries(
                payload["participants"], matched_pods(payload), self.ad_message, env
            )
        logger.info(f"DP gate released {self.query} at ε={self.epsilon}, b={params.scale:.6g}")
        return release_payload(
            self.query,
            released,
            payload,
            parts=released_parts,
            epsilon=self.epsilon,
            scale=params.scale,
            deliveries=deliveries,
        )
