"""
Deterministic evaluator for the task language.

The evaluator has no I/O constructs: its only effect is its return value.
Aggregates clip each element into [clip_lo, clip_hi] and sum left to right in
64-bit floating point.

Comparisons require both sides to carry the same scalar tag, except that
int and float compare numerically with each other (1 == 1.0 holds). Their
canonical encodings still differ, so the two literals hash differently.
"""

from typing import Any, List

from ..exceptions import MissingField, TypeMismatch
from .ast import (
    And,
    Compare,
    Count,
    Exists,
    Expr,
    Literal,
    Mean,
    Not,
    Or,
    Path,
    Sum,
    scalar_tag,
)

_NUMERIC = ("int", "float")


def resolve(path: Path, record: Any) -> Any:
    value = record
    for part in path.parts:
        if not isinstance(value, dict) or part not in value:
            raise MissingField(path.dotted)
        value = value[part]
    return value


def _compare(op: str, left: Any, right: Any) -> bool:
    lt, rt = scalar_tag(left), scalar_tag(right)
    same = lt == rt or (lt in _NUMERIC and rt in _NUMERIC)
    if not same or lt in ("list", "record"):
        raise TypeMismatch(op, (lt, rt))
    if op == "==":
        return left == right
    if op == "!=":
        return left != right
    if lt == "bool" and op not in ("==", "!="):
        raise TypeMismatch(op, (lt, rt))
    if op == "<":
        return left < right
    if op == "<=":
        return left <= right
    if op == ">":
        return left > right
    return left >= right


def _as_bool(op: str, value: Any) -> bool:
    if not isinstance(value, bool):
        raise TypeMismatch(op, (scalar_tag(value),))
    return value


def _records(op: str, value: Any) -> List[dict]:
    if not isinstance(value, list):
        raise TypeMismatch(op, (scalar_tag(value),))
    return value


def _numbers(node, record: Any) -> List[float]:
    """Collect the numeric values an aggregate ranges over."""
    op = "sum" if isinstance(node, Sum) else "mean"
    if isinstance(record, list):
        raw: List[Any] = []
        for item in record:
            value = resolve(node.path, item)
            raw.extend(value if isinstance(value, list) else [value])
    else:
        value = resolve(node.path, record)
        raw = value if isinstance(value, list) else [value]
    numbers = []
    for v in raw:
        if scalar_tag(v) not in _NUMERIC:
            raise TypeMismatch(op, (scalar_tag(v),))
        numbers.append(float(v))
    return numbers


def clipped_sum(values: List[float], lo: float, hi: float) -> float:
    total = 0.0
    for v in values:
        total += min(max(v, float(lo)), float(hi))
    return total


def evaluate(expr: Expr, record: Any) -> Any:
    """Evaluate ``expr`` against a record or a list of records."""
    if isinstance(expr, Literal):
        return expr.value
    if isinstance(expr, Path):
        return resolve(expr, record)
    if isinstance(expr, Compare):
        return _compare(expr.op, evaluate(expr.left, record), evaluate(expr.right, record))
    if isinstance(expr, And):
        return _as_bool("and", evaluate(expr.left, record)) and _as_bool(
            "and", evaluate(expr.right, record)
        )
    if isinstance(expr, Or):
        return _as_bool("or", evaluate(expr.left, record)) or _as_bool(
            "or", evaluate(expr.right, record)
        )
    if isinstance(expr, Not):
        return not _as_bool("not", evaluate(expr.operand, record))
    if isinstance(expr, Exists):
        items = _records("exists", resolve(expr.path, record))
        return any(_as_bool("exists", evaluate(expr.predicate, item)) for item in items)
    if isinstance(expr, Count):
        items = _records("count", record)
        return sum(1 for item in items if _as_bool("count", evaluate(expr.predicate, item)))
    if isinstance(expr, Sum):
        return clipped_sum(_numbers(expr, record), expr.clip_lo, expr.clip_hi)
    if isinstance(expr, Mean):
        values = _numbers(expr, record)
        if not values:
            return 0.0
        return clipped_sum(values, expr.clip_lo, expr.clip_hi) / len(values)
    raise TypeError(f"not a task expression: {type(expr).__name__}")


def aggregate_parts(expr: Expr, records: List[dict]) -> dict:
    """Release-ready parts of a top-level aggregate over a batch of records."""
    if isinstance(expr, Count):
        return {"op": "count", "value": evaluate(expr, records)}
    values = _numbers(expr, records)
    total = clipped_sum(values, expr.clip_lo, expr.clip_hi)
    clip = [float(expr.clip_lo), float(expr.clip_hi)]
    if isinstance(expr, Sum):
        return {"op": "sum", "value": total, "clip": clip, "n": len(values)}
    return {"op": "mean", "sum": total, "count": len(values), "clip": clip}
