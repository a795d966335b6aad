"""Agent expression language: ``T#name`` references, integer/string literals,
C-like arithmetic, comparison and boolean operators, plus payload templating."""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Union

INT64_MIN, INT64_MAX = -(2**63), 2**63 - 1

REF_RE = re.compile(r"(?<![A-Za-z0-9_#])([A-Za-z]+)#([A-Za-z0-9_]+)")
_INT_TEXT = re.compile(r"^\s*-?\d+\s*$")


class ExprSyntaxError(ValueError):
    pass


class EvalError(Exception):
    pass


class MissingReference(EvalError):
    def __init__(self, ref: "Ref"):
        super().__init__(f"unresolved reference {ref.text}")
        self.ref = ref


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Num:
    value: int


@dataclass(frozen=True)
class Str:
    value: str


@dataclass(frozen=True)
class Ref:
    prefix: str
    name: str

    @property
    def text(self) -> str:
        return f"{self.prefix}#{self.name}"


@dataclass(frozen=True)
class Exists:
    ref: Ref


@dataclass(frozen=True)
class Unary:
    op: str
    operand: "Expr"


@dataclass(frozen=True)
class Incr:
    operand: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expr"
    right: "Expr"


Expr = Union[Num, Str, Ref, Exists, Unary, Incr, Binary]


def references(expr: Expr) -> list[Ref]:
    """References in evaluation order, duplicates removed."""
    out: list[Ref] = []

    def walk(e):
        if isinstance(e, Ref):
            if e not in out:
                out.append(e)
        elif isinstance(e, Exists):
            walk(e.ref)
        elif isinstance(e, (Unary, Incr)):
            walk(e.operand)
        elif isinstance(e, Binary):
            walk(e.left)
            walk(e.right)

    walk(expr)
    return out


# ---------------------------------------------------------------------------
# tokenizer / parser

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<exists>\?(?=[A-Za-z]+\#))
  | (?P<ref>[A-Za-z]+\#[A-Za-z0-9_]+)
  | (?P<int>\d+)
  | (?P<str>'(?:[^'\\]|\\.)*'|"(?:[^"\\]|\\.)*")
  | (?P<op>\+\+|&&|\|\||<=|>=|==|!=|[-+*/%<>!()])
    """,
    re.VERBOSE,
)

# binary precedence, C-like
_BINARY = {
    "||": 1,
    "&&": 2,
    "==": 3,
    "!=": 3,
    "<": 4,
    "<=": 4,
    ">": 4,
    ">=": 4,
    "+": 5,
    "-": 5,
    "*": 6,
    "/": 6,
    "%": 6,
}


def _tokenize(text: str) -> list[tuple[str, str]]:
    pos, out = 0, []
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r} at {pos} in {text!r}")
        pos = m.end()
        kind = m.lastgroup
        if kind != "ws":
            out.append((kind, m.group()))
    return out


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else (None, None)

    def take(self):
        tok = self.peek()
        self.i += 1
        return tok

    def parse(self) -> Expr:
        if not self.tokens:
            raise ExprSyntaxError("empty expression")
        e = self.expr(0)
        if self.i != len(self.tokens):
            raise ExprSyntaxError(f"trailing input {self.peek()[1]!r} in {self.text!r}")
        return e

    def expr(self, min_prec: int) -> Expr:
        left = self.unary()
        while True:
            kind, val = self.peek()
            if kind != "op" or val not in _BINARY or _BINARY[val] < min_prec:
                return left
            self.take()
            right = self.expr(_BINARY[val] + 1)
            left = Binary(val, left, right)

    def unary(self) -> Expr:
        kind, val = self.peek()
        if kind == "op" and val in ("!", "-"):
            self.take()
            return Unary(val, self.unary())
        return self.postfix()

    def postfix(self) -> Expr:
        e = self.primary()
        while self.peek() == ("op", "++"):
            self.take()
            e = Incr(e)
        return e

    def primary(self) -> Expr:
        kind, val = self.take()
        if kind == "int":
            return Num(int(val))
        if kind == "str":
            return Str(bytes(val[1:-1], "utf-8").decode("unicode_escape") if "\\" in val else val[1:-1])
        if kind == "ref":
            prefix, name = val.split("#", 1)
            return Ref(prefix, name)
        if kind == "exists":
            k2, v2 = self.take()
            if k2 != "ref":
                raise ExprSyntaxError("'?' must be followed by a reference")
            prefix, name = v2.split("#", 1)
            return Exists(Ref(prefix, name))
        if (kind, val) == ("op", "("):
            e = self.expr(0)
            if self.take() != ("op", ")"):
                raise ExprSyntaxError(f"missing ')' in {self.text!r}")
            return e
        raise ExprSyntaxError(f"unexpected token {val!r} in {self.text!r}")


def parse_expression(text: str) -> Expr:
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# evaluation

Resolver = Callable[[Ref], "str | None"]


def coerce(text: str) -> int | str:
    """Resource text reads as an integer when it looks like one."""
    if _INT_TEXT.match(text):
        return int(text)
    return text


def _check(v: int) -> int:
    if not INT64_MIN <= v <= INT64_MAX:
        raise EvalError("64-bit overflow")
    return v


def _truthy(v) -> bool:
    return v != 0 if isinstance(v, int) else v != ""


def _cdiv(a: int, b: int) -> int:
    if b == 0:
        raise EvalError("division by zero")
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b >= 0) else -q


def evaluate(expr: Expr, resolve: Resolver) -> int | str:
    """Evaluate ``expr``; ``resolve`` returns the text of a reference or None."""

    def ev(e):
        if isinstance(e, Num):
            return _check(e.value)
        if isinstance(e, Str):
            return e.value
        if isinstance(e, Ref):
            text = resolve(e)
            if text is None:
                raise MissingReference(e)
            return coerce(text)
        if isinstance(e, Exists):
            return 1 if resolve(e.ref) is not None else 0
        if isinstance(e, Incr):
            v = ev(e.operand)
            if not isinstance(v, int):
                raise EvalError("'++' on non-integer")
            return _check(v + 1)
        if isinstance(e, Unary):
            v = ev(e.operand)
            if e.op == "!":
                return 0 if _truthy(v) else 1
            if not isinstance(v, int):
                raise EvalError("unary '-' on non-integer")
            return _check(-v)
        op = e.op
        if op == "&&":
            return 1 if _truthy(ev(e.left)) and _truthy(ev(e.right)) else 0
        if op == "||":
            return 1 if _truthy(ev(e.left)) or _truthy(ev(e.right)) else 0
        a, b = ev(e.left), ev(e.right)
        if type(a) is not type(b):
            raise EvalError(f"type mismatch for {op!r}")
        if op == "==":
            return int(a == b)
        if op == "!=":
            return int(a != b)
        if op == "<":
            return int(a < b)
        if op == "<=":
            return int(a <= b)
        if op == ">":
            return int(a > b)
        if op == ">=":
            return int(a >= b)
        if not isinstance(a, int):
            raise EvalError(f"arithmetic {op!r} on non-integer")
        if op == "+":
            return _check(a + b)
        if op == "-":
            return _check(a - b)
        if op == "*":
            return _check(a * b)
        if op == "/":
            return _check(_cdiv(a, b))
        if op == "%":
            return _check(a - b * _cdiv(a, b))
        raise EvalError(f"unknown operator {op}")

    return ev(expr)


def to_text(value: int | str) -> str:
    return str(value)


# ---------------------------------------------------------------------------
# templates

_OPERAND = r"(?:[A-Za-z]+#[A-Za-z0-9_]+|\d+)"
SPAN_RE = re.compile(
    r"(?<![A-Za-z0-9_#])[A-Za-z]+#[A-Za-z0-9_]+(?:\s*\+\+|\s*[-+*/%]\s*" + _OPERAND + r")*"
)


class RenderError(Exception):
    pass


def render_template(template: str, resolve: Resolver) -> str:
    """Substitute every expression span whose references all resolve.

    A bare reference copies the resource text verbatim; a span with operators
    is evaluated.  Spans with an unresolved reference are left untouched so the
    receiving node can resolve them later.
    """

    def sub(m: re.Match) -> str:
        span = m.group()
        try:
            expr = parse_expression(span)
        except ExprSyntaxError:
            return span
        refs = references(expr)
        texts = {r: resolve(r) for r in refs}
        if any(t is None for t in texts.values()):
            return span
        if isinstance(expr, Ref):
            return texts[expr]
        try:
            return to_text(evaluate(expr, texts.get))
        except EvalError as exc:
            raise RenderError(f"cannot evaluate {span!r}: {exc}") from exc

    return SPAN_RE.sub(sub, template)
