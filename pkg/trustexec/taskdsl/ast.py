"""
AST nodes for the task language.

Nodes are immutable; ``to_canonical`` maps a tree onto nested lists whose
canonical encoding defines the function digest.
"""

from dataclasses import dataclass
from typing import Tuple, Union

from ..crypto.codec import Digest, canonical_digest

Scalar = Union[int, float, str, bool]

COMPARISON_OPS = ("==", "!=", "<", "<=", ">", ">=")


@dataclass(frozen=True)
class Literal:
    value: Scalar


@dataclass(frozen=True)
class Path:
    parts: Tuple[str, ...]

    @property
    def dotted(self) -> str:
        return ".".join(self.parts)


@dataclass(frozen=True)
class Compare:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class And:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Or:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Not:
    operand: "Expr"


@dataclass(frozen=True)
class Exists:
    path: Path
    predicate: "Expr"


@dataclass(frozen=True)
class Count:
    predicate: "Expr"


@dataclass(frozen=True)
class Sum:
    path: Path
    clip_lo: Union[int, float]
    clip_hi: Union[int, float]


@dataclass(frozen=True)
class Mean:
    path: Path
    clip_lo: Union[int, float]
    clip_hi: Union[int, float]


Expr = Union[Literal, Path, Compare, And, Or, Not, Exists, Count, Sum, Mean]
Aggregate = (Count, Sum, Mean)


def scalar_tag(value) -> str:
    if isinstance(value, bool):
        return "bool"
    if isinstance(value, int):
        return "int"
    if isinstance(value, float):
        return "float"
    if isinstance(value, str):
        return "string"
    if isinstance(value, list):
        return "list"
    if isinstance(value, dict):
        return "record"
    return type(value).__name__


def to_canonical(node: Expr) -> list:
    if isinstance(node, Literal):
        return ["lit", scalar_tag(node.value), node.value]
    if isinstance(node, Path):
        return ["path", list(node.parts)]
    if isinstance(node, Compare):
        return ["cmp", node.op, to_canonical(node.left), to_canonical(node.right)]
    if isinstance(node, And):
        return ["and", to_canonical(node.left), to_canonical(node.right)]
    if isinstance(node, Or):
        return ["or", to_canonical(node.left), to_canonical(node.right)]
    if isinstance(node, Not):
        return ["not", to_canonical(node.operand)]
    if isinstance(node, Exists):
        return ["exists", to_canonical(node.path), to_canonical(node.predicate)]
    if isinstance(node, Count):
        return ["count", to_canonical(node.predicate)]
    if isinstance(node, (Sum, Mean)):
        name = "sum" if isinstance(node, Sum) else "mean"
        return [
            name,
            to_canonical(node.path),
            ["lit", scalar_tag(node.clip_lo), node.clip_lo],
            ["lit", scalar_tag(node.clip_hi), node.clip_hi],
        ]
    raise TypeError(f"not a task expression: {type(node).__name__}")


def fn_digest(expr: Expr) -> Digest:
    """Digest of the task function, independent of source formatting."""
    return canonical_digest(["taskdsl/1", to_canonical(expr)])


def is_aggregate(expr: Expr) -> bool:
    return isinstance(expr, Aggregate)
