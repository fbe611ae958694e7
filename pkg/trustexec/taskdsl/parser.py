"""
Tokenizer, recursive-descent parser and pretty printer for the task language.

Grammar:
    expr     := or_expr
    or_expr  := and_expr { "or" and_expr }
    and_expr := not_expr { "and" not_expr }
    not_expr := ["not"] cmp
    cmp      := term [ ("=="|"!="|"<"|"<="|">"|">=") term ]
    term     := literal | path | agg | "(" expr ")"
    agg      := "exists(" path "," expr ")" | "count(" expr ")"
              | ("sum"|"mean") "(" path "," number "," number ")"
    path     := ident { "." ident }
    literal  := number | string | "true" | "false"

Comments run from ``#`` to the end of the line.
"""

import json
import math
import re
from dataclasses import dataclass
from typing import List, Optional

from ..exceptions import TaskSyntaxError
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
)

KEYWORDS = frozenset(
    {"and", "or", "not", "true", "false", "exists", "count", "sum", "mean"}
)
_INT_LIMIT = 2**63
_SURROGATE_RE = re.compile("[\ud800-\udfff]")

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<newline>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<number>-?\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>==|!=|<=|>=|<|>)
  | (?P<punct>[(),.])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # number, string, ident, keyword, op, punct, eof
    text: str
    line: int
    column: int


def tokenize(source: str) -> List[Token]:
    tokens: List[Token] = []
    pos, line, line_start = 0, 1, 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise TaskSyntaxError(
                f"unexpected character {source[pos]!r}", line, pos - line_start + 1
            )
        kind = m.lastgroup
        text = m.group()
        column = pos - line_start + 1
        if kind == "newline":
            line += 1
            line_start = m.end()
        elif kind == "ident" and text in KEYWORDS:
            tokens.append(Token("keyword", text, line, column))
        elif kind not in ("ws", "comment"):
            tokens.append(Token(kind, text, line, column))
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, tokens: List[Token]):
        self.tokens = tokens
        self.pos = 0

    @property
    def current(self) -> Token:
        return self.tokens[self.pos]

    def _advance(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def _error(self, message: str, tok: Optional[Token] = None) -> TaskSyntaxError:
        tok = tok or self.current
        found = "end of input" if tok.kind == "eof" else repr(tok.text)
        return TaskSyntaxError(f"{message}, found {found}", tok.line, tok.column)

    def _is(self, kind: str, text: Optional[str] = None) -> bool:
        tok = self.current
        return tok.kind == kind and (text is None or tok.text == text)

    def _expect(self, kind: str, text: str) -> Token:
        if not self._is(kind, text):
            raise self._error(f"expected {text!r}")
        return self._advance()

    def _close(self, opener: Token) -> None:
        """Consume ')' matching ``opener``; at end of input point at the opener."""
        if self._is("punct", ")"):
            self._advance()
            return
        if self.current.kind == "eof":
            raise TaskSyntaxError("unclosed '('", opener.line, opener.column)
        raise self._error("expected ')'")

    # -- grammar ---------------------------------------------------------

    def parse(self) -> Expr:
        expr = self.parse_expr()
        if self.current.kind != "eof":
            raise self._error("unexpected token")
        return expr

    def parse_expr(self) -> Expr:
        left = self.parse_and()
        while self._is("keyword", "or"):
            self._advance()
            left = Or(left, self.parse_and())
        return left

    def parse_and(self) -> Expr:
        left = self.parse_not()
        while self._is("keyword", "and"):
            self._advance()
            left = And(left, self.parse_not())
        return left

    def parse_not(self) -> Expr:
        if self._is("keyword", "not"):
            self._advance()
            return Not(self.parse_cmp())
        return self.parse_cmp()

    def parse_cmp(self) -> Expr:
        left = self.parse_term()
        if self.current.kind == "op":
            op = self._advance().text
            return Compare(op, left, self.parse_term())
        return left

    def parse_term(self) -> Expr:
        tok = self.current
        if tok.kind == "number":
            return Literal(self._number(self._advance()))
        if tok.kind == "string":
            return Literal(self._string(self._advance()))
        if tok.kind == "keyword" and tok.text in ("true", "false"):
            self._advance()
            return Literal(tok.text == "true")
        if tok.kind == "keyword" and tok.text in ("exists", "count", "sum", "mean"):
            return self.parse_aggregate()
        if tok.kind == "ident":
            return self.parse_path()
        if self._is("punct", "("):
            opener = self._advance()
            expr = self.parse_expr()
            self._close(opener)
            return expr
        raise self._error("expected a literal, field path, aggregate or '('")

    def parse_aggregate(self) -> Expr:
        name = self._advance().text
        opener = self._expect("punct", "(")
        if name == "exists":
            path = self.parse_path()
            self._expect("punct", ",")
            predicate = self.parse_expr()
            self._close(opener)
            return Exists(path, predicate)
        if name == "count":
            predicate = self.parse_expr()
            self._close(opener)
            return Count(predicate)
        path = self.parse_path()
        self._expect("punct", ",")
        lo_tok = self.current
        lo = self._clip_bound()
        self._expect("punct", ",")
        hi = self._clip_bound()
        self._close(opener)
        if not lo < hi:
            raise TaskSyntaxError(
                "clip bounds must satisfy lo < hi", lo_tok.line, lo_tok.column
            )
        return Sum(path, lo, hi) if name == "sum" else Mean(path, lo, hi)

    def parse_path(self) -> Path:
        if self.current.kind != "ident":
            raise self._error("expected a field path")
        parts = [self._advance().text]
        while self._is("punct", "."):
            self._advance()
            if self.current.kind != "ident":
                raise self._error("expected an identifier after '.'")
            parts.append(self._advance().text)
        return Path(tuple(parts))

    def _clip_bound(self):
        if self.current.kind != "number":
            raise self._error("expected a numeric clip bound")
        return self._number(self._advance())

    def _string(self, tok: Token) -> str:
        try:
            value = json.loads(tok.text)
        except json.JSONDecodeError as e:
            raise TaskSyntaxError(f"invalid string literal: {e.msg}", tok.line, tok.column) from None
        if _SURROGATE_RE.search(value):
            raise TaskSyntaxError("string literal contains a lone surrogate", tok.line, tok.column)
        return value

    def _number(self, tok: Token):
        if any(c in tok.text for c in ".eE"):
            value = float(tok.text)
            if not math.isfinite(value):
                raise TaskSyntaxError("float literal out of range", tok.line, tok.column)
            return value
        value = int(tok.text)
        if not -_INT_LIMIT <= value < _INT_LIMIT:
            raise TaskSyntaxError("integer literal out of range", tok.line, tok.column)
        return value


def parse(source: str) -> Expr:
    """Parse task source into an AST."""
    return _Parser(tokenize(source)).parse()


def format_expr(node: Expr) -> str:
    """Render an AST as source that reparses to an equal tree."""
    if isinstance(node, Literal):
        v = node.value
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, str):
            return json.dumps(v, ensure_ascii=False)
        return repr(v)
    if isinstance(node, Path):
        return node.dotted
    if isinstance(node, Compare):
        return f"({format_expr(node.left)} {node.op} {format_expr(node.right)})"
    if isinstance(node, And):
        return f"({format_expr(node.left)} and {format_expr(node.right)})"
    if isinstance(node, Or):
        return f"({format_expr(node.left)} or {format_expr(node.right)})"
    if isinstance(node, Not):
        return f"(not {format_expr(node.operand)})"
    if isinstance(node, Exists):
        return f"exists({node.path.dotted}, {format_expr(node.predicate)})"
    if isinstance(node, Count):
        return f"count({format_expr(node.predicate)})"
    if isinstance(node, (Sum, Mean)):
        name = "sum" if isinstance(node, Sum) else "mean"
        return f"{name}({node.path.dotted}, {node.clip_lo!r}, {node.clip_hi!r})"
    raise TypeError(f"not a task expression: {type(node).__name__}")
