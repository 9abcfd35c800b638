"""Scalar expressions of the time variable ``t``.

Coefficient matrices in system files are written entry by entry as small
arithmetic expressions, e.g. ``"2*t + sin(t)^2"`` or ``"min(t, 1-t)"``.
This module tokenizes and parses them with a recursive-descent parser and
evaluates the resulting tree in IEEE double precision.

Grammar (whitespace is ignored)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := primary ('^' unary)?
    primary := NUMBER | 't' | 'pi' | 'e'
             | FUNC '(' expr (',' expr)* ')'
             | '(' expr ')'

``^`` binds tighter than unary minus (``-2^2 == -4``) and is
right-associative; the other binary operators associate to the left.
Implicit multiplication (``2t``) is rejected.

Each node compiles itself into a closure when it is constructed, so
evaluation is a chain of plain Python calls with no dispatch on node type.
Nodes are frozen; sharing them between threads is safe.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Tuple

from .errors import HamoscError

__all__ = [
    "Expr",
    "Num",
    "Var",
    "Const",
    "Neg",
    "BinOp",
    "Call",
    "ExprSyntaxError",
    "EvalError",
    "parse",
    "evaluate",
    "serialize",
    "FUNCTIONS",
    "CONSTANTS",
]

CONSTANTS = {"pi": math.pi, "e": math.e}

# name -> (min arity, max arity); None means unbounded
_ARITY = {
    "sin": (1, 1),
    "cos": (1, 1),
    "tan": (1, 1),
    "exp": (1, 1),
    "log": (1, 1),
    "sqrt": (1, 1),
    "abs": (1, 1),
    "min": (2, None),
    "max": (2, None),
}
FUNCTIONS = frozenset(_ARITY)


class ExprSyntaxError(HamoscError):
    """Malformed expression source.

    Attributes
    ----------
    offset : int
        Byte offset (UTF-8) of the offending token in the source.
    expected : frozenset of str
        Token kinds that would have been accepted at ``offset``.
    """

    def __init__(self, message: str, offset: int, expected=(), source: str = ""):
        self.offset = offset
        self.expected = frozenset(expected)
        self.source = source
        detail = f"{message} at byte {offset}"
        if self.expected:
            detail += f"; expected one of {sorted(self.expected)}"
        super().__init__(detail)

    def to_dict(self) -> dict:
        d = super().to_dict()
        d.update(offset=self.offset, expected=sorted(self.expected))
        return d


class EvalError(HamoscError):
    """Domain violation during evaluation (pole, log of non-positive, ...)."""

    def __init__(self, reason: str, node: "Expr", t: float):
        self.reason = reason
        self.offset = node.pos
        self.subexpr = serialize(node)
        self.t = t
        super().__init__(f"{reason} in '{self.subexpr}' (byte {node.pos}) at t={t!r}")

    def to_dict(self) -> dict:
        d = super().to_dict()
        d.update(offset=self.offset, subexpr=self.subexpr, t=self.t)
        return d


# --------------------------------------------------------------------------
# AST
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Expr:
    pos: int = field(default=0, compare=False, repr=False, kw_only=True)
    _fn: Callable[[float], float] = field(
        default=None, init=False, compare=False, repr=False
    )

    def __post_init__(self):
        object.__setattr__(self, "_fn", self._compile())

    def _compile(self) -> Callable[[float], float]:
        raise NotImplementedError

    def __call__(self, t: float) -> float:
        return self._fn(t)

    def depends_on_t(self) -> bool:
        raise NotImplementedError


@dataclass(frozen=True)
class Num(Expr):
    value: float = 0.0

    def _compile(self):
        v = float(self.value)
        return lambda t: v

    def depends_on_t(self):
        return False


@dataclass(frozen=True)
class Var(Expr):
    name: str = "t"

    def _compile(self):
        return lambda t: t

    def depends_on_t(self):
        return True


@dataclass(frozen=True)
class Const(Expr):
    name: str = "pi"

    def _compile(self):
        v = CONSTANTS[self.name]
        return lambda t: v

    def depends_on_t(self):
        return False


@dataclass(frozen=True)
class Neg(Expr):
    operand: Expr = None

    def _compile(self):
        f = self.operand._fn
        return lambda t: -f(t)

    def depends_on_t(self):
        return self.operand.depends_on_t()


def _checked_pow(a: float, b: float, node: Expr, t: float) -> float:
    if a == 0.0 and b < 0.0:
        raise EvalError("zero raised to a negative power", node, t)
    if a < 0.0 and math.isfinite(b) and not float(b).is_integer():
        raise EvalError("negative base with non-integer exponent", node, t)
    try:
        return math.pow(a, b)
    except OverflowError:
        negative = a < 0.0 and float(b).is_integer() and int(b) % 2 == 1
        return -math.inf if negative else math.inf
    except ValueError:
        raise EvalError("pow domain error", node, t) from None


@dataclass(frozen=True)
class BinOp(Expr):
    op: str = "+"
    left: Expr = None
    right: Expr = None

    def _compile(self):
        lf, rf = self.left._fn, self.right._fn
        op = self.op
        if op == "+":
            return lambda t: lf(t) + rf(t)
        if op == "-":
            return lambda t: lf(t) - rf(t)
        if op == "*":
            return lambda t: lf(t) * rf(t)
        node = self
        if op == "/":

            def div(t):
                a = lf(t)
                b = rf(t)
                if b == 0.0:
                    raise EvalError("division by zero", node, t)
                return a / b

            return div
        if op == "^":
            return lambda t: _checked_pow(lf(t), rf(t), node, t)
        raise ValueError(f"unknown operator {op!r}")

    def depends_on_t(self):
        return self.left.depends_on_t() or self.right.depends_on_t()


def _unary_math(name: str, node: Expr, g: Callable[[float], float]):
    if name == "log":

        def f(t):
            x = g(t)
            if not x > 0.0:
                raise EvalError("log of non-positive value", node, t)
            return math.log(x)

        return f
    if name == "sqrt":

        def f(t):
            x = g(t)
            if x < 0.0:
                raise EvalError("sqrt of negative value", node, t)
            return math.sqrt(x)

        return f
    if name == "exp":

        def f(t):
            try:
                return math.exp(g(t))
            except OverflowError:
                return math.inf

        return f
    if name == "abs":
        return lambda t: abs(g(t))
    fn = getattr(math, name)

    def f(t):
        try:
            return fn(g(t))
        except ValueError:
            raise EvalError(f"{name} domain error", node, t) from None

    return f


@dataclass(frozen=True)
class Call(Expr):
    name: str = "sin"
    args: Tuple[Expr, ...] = ()

    def _compile(self):
        fns = [a._fn for a in self.args]
        if self.name == "min":
            return lambda t: min([f(t) for f in fns])
        if self.name == "max":
            return lambda t: max([f(t) for f in fns])
        return _unary_math(self.name, self, fns[0])

    def depends_on_t(self):
        return any(a.depends_on_t() for a in self.args)


# --------------------------------------------------------------------------
# Tokenizer and parser
# --------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE,
)

_PRIMARY_START = frozenset({"<number>", "t", "pi", "e", "<function>", "(", "-"})
_AFTER_OPERAND = frozenset({"+", "-", "*", "/", "^", "<end>"})


@dataclass
class _Tok:
    kind: str  # 'num', 'ident', 'op', 'end'
    text: str
    pos: int  # character index


class _Parser:
    def __init__(self, source: str):
        self.source = source
        self.toks = self._tokenize(source)
        self.i = 0

    def _byte(self, char_index: int) -> int:
        return len(self.source[:char_index].encode("utf-8"))

    def _error(self, message: str, tok: _Tok, expected=()):
        raise ExprSyntaxError(message, self._byte(tok.pos), expected, self.source)

    def _tokenize(self, s: str):
        toks = []
        i = 0
        while i < len(s):
            m = _TOKEN_RE.match(s, i)
            if m is None:
                raise ExprSyntaxError(
                    f"unexpected character {s[i]!r}",
                    self._byte(i),
                    _PRIMARY_START | _AFTER_OPERAND,
                    s,
                )
            kind = m.lastgroup
            if kind != "ws":
                toks.append(_Tok(kind, m.group(), i))
            i = m.end()
        toks.append(_Tok("end", "", len(s)))
        return toks

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def _is_op(self, *ops) -> bool:
        return self.tok.kind == "op" and self.tok.text in ops

    def parse(self) -> Expr:
        e = self.expr()
        if self.tok.kind != "end":
            self._error(f"unexpected token {self.tok.text!r}", self.tok, _AFTER_OPERAND)
        return e

    def expr(self) -> Expr:
        left = self.term()
        while self._is_op("+", "-"):
            tok = self.tok
            self.i += 1
            right = self.term()
            left = BinOp(op=tok.text, left=left, right=right, pos=self._byte(tok.pos))
        return left

    def term(self) -> Expr:
        left = self.unary()
        while self._is_op("*", "/"):
            tok = self.tok
            self.i += 1
            right = self.unary()
            left = BinOp(op=tok.text, left=left, right=right, pos=self._byte(tok.pos))
        return left

    def unary(self) -> Expr:
        if self._is_op("-"):
            tok = self.tok
            self.i += 1
            return Neg(operand=self.unary(), pos=self._byte(tok.pos))
        return self.power()

    def power(self) -> Expr:
        base = self.primary()
        if self._is_op("^"):
            tok = self.tok
            self.i += 1
            exponent = self.unary()
            return BinOp(op="^", left=base, right=exponent, pos=self._byte(tok.pos))
        return base

    def primary(self) -> Expr:
        tok = self.tok
        pos = self._byte(tok.pos)
        if tok.kind == "num":
            self.i += 1
            return Num(value=float(tok.text), pos=pos)
        if tok.kind == "ident":
            name = tok.text
            if name == "t":
                self.i += 1
                return Var(name="t", pos=pos)
            if name in CONSTANTS:
                self.i += 1
                return Const(name=name, pos=pos)
            if name in FUNCTIONS:
                self.i += 1
                return self._call(name, tok)
            self._error(f"unknown identifier {name!r}", tok, _PRIMARY_START)
        if self._is_op("("):
            self.i += 1
            inner = self.expr()
            if not self._is_op(")"):
                self._error("unbalanced parenthesis", self.tok, {")"} | _AFTER_OPERAND - {"<end>"})
            self.i += 1
            return inner
        what = "end of input" if tok.kind == "end" else f"token {tok.text!r}"
        self._error(f"unexpected {what}", tok, _PRIMARY_START)

    def _call(self, name: str, name_tok: _Tok) -> Expr:
        if not self._is_op("("):
            self._error(f"function {name!r} must be called", self.tok, {"("})
        self.i += 1
        args = [self.expr()]
        while self._is_op(","):
            self.i += 1
            args.append(self.expr())
        if not self._is_op(")"):
            self._error("unterminated argument list", self.tok, {",", ")"})
        self.i += 1
        lo, hi = _ARITY[name]
        if len(args) < lo or (hi is not None and len(args) > hi):
            want = str(lo) if lo == hi else f"at least {lo}"
            raise ExprSyntaxError(
                f"{name} takes {want} argument(s), got {len(args)}",
                self._byte(name_tok.pos),
                (),
                self.source,
            )
        return Call(name=name, args=tuple(args), pos=self._byte(name_tok.pos))


def parse(source: str) -> Expr:
    """Parse ``source`` into an expression tree.

    Raises
    ------
    ExprSyntaxError
        With the byte offset and the set of acceptable tokens.
    """
    return _Parser(source).parse()


def evaluate(e: Expr, t: float) -> float:
    """Evaluate ``e`` at time ``t``; raises :class:`EvalError` on domain violations."""
    return e._fn(float(t))


def _num_text(v: float) -> str:
    if math.isinf(v):
        return "1e999"
    return repr(float(v))


def serialize(e: Expr) -> str:
    """Fully parenthesized source text that parses back to an equal tree."""
    if isinstance(e, Num):
        return _num_text(e.value)
    if isinstance(e, (Var, Const)):
        return e.name
    if isinstance(e, Neg):
        return f"(-{serialize(e.operand)})"
    if isinstance(e, BinOp):
        return f"({serialize(e.left)} {e.op} {serialize(e.right)})"
    if isinstance(e, Call):
        return f"{e.name}({', '.join(serialize(a) for a in e.args)})"
    raise TypeError(f"not an expression node: {e!r}")
