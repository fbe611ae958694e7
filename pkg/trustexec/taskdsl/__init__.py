"""The task language executed inside TaskExec sandboxes."""

from .ast import Expr, fn_digest, is_aggregate, to_canonical
from .evaluator import aggregate_parts, evaluate
from .parser import format_expr, parse, tokenize

__all__ = [
    "Expr",
    "aggregate_parts",
    "evaluate",
    "fn_digest",
    "format_expr",
    "is_aggregate",
    "parse",
    "to_canonical",
    "tokenize",
]
