"""
Task-execution λ: runs consumer task code over authenticated records.

A predicate task filters records; a top-level count/sum/mean produces
release-ready aggregate parts.
"""

import logging
from typing import Any, Dict, List, Optional

from ..crypto.codec import Digest, canonical_digest
from ..exceptions import DecodeError, TypeMismatch
from ..models.proof import LambdaKind
from ..taskdsl import aggregate_parts, evaluate, fn_digest, is_aggregate, to_canonical
from ..taskdsl.ast import Expr, Mean, scalar_tag
from .base import LambdaEnv, LambdaFunction
from .release import inbox_deliveries, matched_pods, release_payload

logger = logging.getLogger(__name__)


def upstream_context(payload: Dict) -> Dict:
    """Metadata carried unchanged from the data prover."""
    records = payload["records"]
    return {
        "participants": payload.get("participants", []),
        "alleged": any(r["tag"]["verdict"] == "Alleged" for r in records),
        "summary": payload.get("summary", {}),
    }


class TaskExecFunction(LambdaFunction):
    """
    Sandbox function for consumer task code.

    When ``final`` is set the step is the last in the pipeline (no DP gate)
    and emits a release payload directly instead of raw matches.
    """

    kind = LambdaKind.TASK_EXEC

    def __init__(self, expr: Expr, final: bool = False, ad_message: Optional[str] = None):
        self.expr = expr
        self.final = final
        self.ad_message = ad_message

    @property
    def mode(self) -> str:
        return "aggregate" if is_aggregate(self.expr) else "filter"

    def describe(self) -> list:
        return ["task-exec/1", to_canonical(self.expr), self.final, self.ad_message or ""]

    @property
    def digest(self) -> Digest:
        if not self.final and self.ad_message is None:
            return fn_digest(self.expr)
        return canonical_digest(
            ["task-exec/final", fn_digest(self.expr), self.final, self.ad_message or ""]
        )

    def apply(self, payload: Any, env: LambdaEnv) -> Dict:
        try:
            records: List[Dict] = payload["records"]
            values = [r["payload"] for r in records]
            context = upstream_context(payload)
        except (KeyError, TypeError) as e:
            raise DecodeError(f"task input is not a prover output: {e}") from e

        if self.mode == "aggregate":
            parts = aggregate_parts(self.expr, values)
            out = {"mode": "aggregate", "parts": parts, "n": len(values), **context}
            logger.debug(f"Task aggregate {parts['op']} over {len(values)} record(s)")
            return self._release(out) if self.final else out

        flags = []
        for value in values:
            flag = evaluate(self.expr, value)
            if not isinstance(flag, bool):
                raise TypeMismatch("filter", (scalar_tag(flag),))
            flags.append(flag)
        out = {
            "mode": "filter",
            "count": sum(flags),
            "matches": [r for r, f in zip(records, flags) if f],
            "flags": flags,
            "pods": [r["pod"] for r in records],
            **context,
        }
        logger.debug(f"Task filter matched {out['count']} of {len(records)} record(s)")
        return self._release(out, env) if self.final else out

    def _release(self, out: Dict, env: Optional[LambdaEnv] = None) -> Dict:
        """Strict-level release without noise: never raw records."""
        if out["mode"] == "filter":
            deliveries = None
            if self.ad_message is not None and env is not None:
                deliveries = inbox_deliveries(
                    out["participants"], matched_pods(out), self.ad_message, env
                )
            return release_payload("count", out["count"], out, deliveries=deliveries)
        parts = out["parts"]
        if isinstance(self.expr, Mean):
            return release_payload(
                "mean", None, out, parts={"sum": parts["sum"], "count": parts["count"]}
            )
        return release_payload(parts["op"], parts["value"], out)
