"""Tiny expression language: parse, evaluate, differentiate.

Scalar functions of a single named variable, e.g. ``1+0.1*sin(t)`` or
``Q^4/4``.  Grammar (left-associative, standard precedence
pow > unary minus > mul/div > add/sub):

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := base ('^' number)?
    base   := number | ident | ident '(' expr ')' | '(' expr ')' | '-' base

Built-in functions: sin, cos, exp, ln, sqrt.  The only other legal
identifier is the declared variable.  Exponents are numeric literals, so
the node set is closed under symbolic differentiation and derivatives
stay exact (no finite differencing anywhere downstream).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

from .errors import ExprDomainError, ExprSyntaxError

__all__ = [
    "Expr",
    "Const",
    "Var",
    "Unary",
    "Binary",
    "Pow",
    "Func1",
    "parse",
    "evaluate",
    "differentiate",
    "to_source",
    "rename_var",
    "is_zero",
    "compile_func",
    "func_from_expr",
    "constant_func",
]


# --- AST -----------------------------------------------------------------

@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str  # one of: neg sin cos exp ln sqrt
    arg: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str  # one of: + - * /
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Pow:
    base: "Expr"
    exponent: float  # literal constant, keeps the derivative rule exact


Expr = Union[Const, Var, Unary, Binary, Pow]

_FUNCTIONS = ("sin", "cos", "exp", "ln", "sqrt")


def is_zero(e: Expr) -> bool:
    """Structurally-zero test: the literal constant 0."""
    return isinstance(e, Const) and e.value == 0.0


# --- evaluation ----------------------------------------------------------

def evaluate(e: Expr, x: float) -> float:
    """Evaluate ``e`` at the point ``x``.

    Raises ExprDomainError for division by zero, ln/sqrt of a negative
    argument, or any non-finite intermediate, naming the offending
    subexpression.
    """
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        return x
    if isinstance(e, Unary):
        v = evaluate(e.arg, x)
        try:
            if e.op == "neg":
                return -v
            if e.op == "sin":
                return math.sin(v)
            if e.op == "cos":
                return math.cos(v)
            if e.op == "exp":
                return math.exp(v)
            if e.op == "ln":
                return math.log(v)
            if e.op == "sqrt":
                return math.sqrt(v)
        except (ValueError, OverflowError) as err:
            raise ExprDomainError(str(err), _clip(to_source(e)), x) from None
        raise AssertionError(f"unknown unary op {e.op!r}")
    if isinstance(e, Binary):
        a = evaluate(e.left, x)
        b = evaluate(e.right, x)
        try:
            if e.op == "+":
                r = a + b
            elif e.op == "-":
                r = a - b
            elif e.op == "*":
                r = a * b
            elif e.op == "/":
                r = a / b
            else:
                raise AssertionError(f"unknown binary op {e.op!r}")
        except ZeroDivisionError:
            raise ExprDomainError("division by zero", _clip(to_source(e)), x) from None
        if not math.isfinite(r):
            raise ExprDomainError("non-finite result", _clip(to_source(e)), x)
        return r
    if isinstance(e, Pow):
        b = evaluate(e.base, x)
        try:
            r = math.pow(b, e.exponent)
        except (ValueError, OverflowError) as err:
            raise ExprDomainError(str(err), _clip(to_source(e)), x) from None
        if not math.isfinite(r):
            raise ExprDomainError("non-finite result", _clip(to_source(e)), x)
        return r
    raise TypeError(f"not an Expr node: {e!r}")


def _clip(s: str, n: int = 60) -> str:
    return s if len(s) <= n else s[: n - 3] + "..."


# --- differentiation -----------------------------------------------------

# Smart constructors fold constants and drop 0/1 identities so derivative
# trees stay small; they never change evaluation results away from points
# where the unfolded tree was already undefined.

def _const(v: float) -> Const:
    return Const(float(v))


def _add(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return _const(a.value + b.value)
    if is_zero(a):
        return b
    if is_zero(b):
        return a
    return Binary("+", a, b)


def _sub(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return _const(a.value - b.value)
    if is_zero(b):
        return a
    if is_zero(a):
        return _neg(b)
    return Binary("-", a, b)


def _mul(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return _const(a.value * b.value)
    if is_zero(a) or is_zero(b):
        return _const(0.0)
    if isinstance(a, Const) and a.value == 1.0:
        return b
    if isinstance(b, Const) and b.value == 1.0:
        return a
    return Binary("*", a, b)


def _div(a: Expr, b: Expr) -> Expr:
    if is_zero(a):
        return _const(0.0)
    if isinstance(b, Const) and b.value == 1.0:
        return a
    return Binary("/", a, b)


def _neg(a: Expr) -> Expr:
    if isinstance(a, Const):
        return _const(-a.value)
    return Unary("neg", a)


def _pow(base: Expr, exponent: float) -> Expr:
    if exponent == 1.0:
        return base
    if exponent == 0.0:
        return _const(1.0)
    return Pow(base, float(exponent))


def differentiate(e: Expr) -> Expr:
    """Exact symbolic derivative with respect to the expression's variable.

    The grammar is closed under this operation, so the result can be
    differentiated again (second derivatives of the mass function are
    needed by the frequency-shift formula).
    """
    if isinstance(e, Const):
        return _const(0.0)
    if isinstance(e, Var):
        return _const(1.0)
    if isinstance(e, Unary):
        da = differentiate(e.arg)
        if e.op == "neg":
            return _neg(da)
        if e.op == "sin":
            return _mul(Unary("cos", e.arg), da)
        if e.op == "cos":
            return _neg(_mul(Unary("sin", e.arg), da))
        if e.op == "exp":
            return _mul(Unary("exp", e.arg), da)
        if e.op == "ln":
            return _div(da, e.arg)
        if e.op == "sqrt":
            return _div(da, _mul(_const(2.0), Unary("sqrt", e.arg)))
        raise AssertionError(f"unknown unary op {e.op!r}")
    if isinstance(e, Binary):
        da = differentiate(e.left)
        db = differentiate(e.right)
        if e.op == "+":
            return _add(da, db)
        if e.op == "-":
            return _sub(da, db)
        if e.op == "*":
            return _add(_mul(da, e.right), _mul(e.left, db))
        if e.op == "/":
            return _div(_sub(_mul(da, e.right), _mul(e.left, db)), _pow(e.right, 2.0))
        raise AssertionError(f"unknown binary op {e.op!r}")
    if isinstance(e, Pow):
        # d(u^c) = c * u^(c-1) * u'
        return _mul(_mul(_const(e.exponent), _pow(e.base, e.exponent - 1.0)),
                    differentiate(e.base))
    raise TypeError(f"not an Expr node: {e!r}")


def rename_var(e: Expr, new_name: str) -> Expr:
    """Return a copy of ``e`` with every variable node renamed."""
    if isinstance(e, Const):
        return e
    if isinstance(e, Var):
        return Var(new_name)
    if isinstance(e, Unary):
        return Unary(e.op, rename_var(e.arg, new_name))
    if isinstance(e, Binary):
        return Binary(e.op, rename_var(e.left, new_name), rename_var(e.right, new_name))
    if isinstance(e, Pow):
        return Pow(rename_var(e.base, new_name), e.exponent)
    raise TypeError(f"not an Expr node: {e!r}")


# --- printing ------------------------------------------------------------

def _fmt_number(v: float) -> str:
    # repr() round-trips doubles exactly and stays inside the number token
    # ("1e-05", "0.25", "4.0" all re-parse).
    if v < 0:
        raise AssertionError("negative literal must be wrapped by the caller")
    s = repr(float(v))
    return s


def to_source(e: Expr) -> str:
    """Pretty-print ``e`` back into the concrete grammar.

    Re-parsing the output yields an expression that evaluates
    identically.  Negative constants and negative exponents (which can
    appear in derivative trees but have no literal form) are rewritten
    as ``-(...)`` and ``1/x^|c|``.
    """
    return _print(e, 0)


# precedence levels: add/sub 1, mul/div 2, unary minus 3, pow 4
def _print(e: Expr, parent_prec: int) -> str:
    if isinstance(e, Const):
        if e.value < 0 or (e.value == 0.0 and math.copysign(1.0, e.value) < 0):
            s = "-" + _fmt_number(-e.value)
            return f"({s})" if parent_prec > 1 else s
        return _fmt_number(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Unary):
        if e.op == "neg":
            s = "-" + _print(e.arg, 3)
            return f"({s})" if parent_prec > 3 else s
        return f"{e.op}({_print(e.arg, 0)})"
    if isinstance(e, Binary):
        prec = 1 if e.op in "+-" else 2
        left = _print(e.left, prec)
        # parenthesize same-level right children even for + and *: the
        # grammar is left-associative, and keeping the original grouping
        # makes re-parsed trees evaluate bit-identically
        right = _print(e.right, prec + 1)
        s = f"{left}{e.op}{right}"
        return f"({s})" if parent_prec > prec else s
    if isinstance(e, Pow):
        if e.exponent < 0:
            return _print(_div(_const(1.0), Pow(e.base, -e.exponent)), parent_prec)
        s = f"{_print(e.base, 5)}^{_fmt_number(e.exponent)}"
        return f"({s})" if parent_prec > 4 else s
    raise TypeError(f"not an Expr node: {e!r}")


# --- tokenizer / parser --------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<number>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(source: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None or m.end() == pos:
            stripped = source[pos:].lstrip()
            if not stripped:
                break
            bad = len(source) - len(stripped)
            raise ExprSyntaxError(f"illegal character {source[bad]!r}", source, bad)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, source: str, var_name: str):
        self.source = source
        self.var_name = var_name
        self.tokens = _tokenize(source)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op: str):
        kind, text, off = self.peek()
        if kind != "op" or text != op:
            raise ExprSyntaxError(f"expected {op!r}", self.source, off)
        return self.advance()

    def parse(self) -> Expr:
        e = self.expr()
        kind, text, off = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected {text!r}", self.source, off)
        return e

    def expr(self) -> Expr:
        e = self.term()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "+-":
                self.advance()
                e = Binary(text, e, self.term())
            else:
                return e

    def term(self) -> Expr:
        e = self.factor()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "*/":
                self.advance()
                e = Binary(text, e, self.factor())
            else:
                return e

    def factor(self) -> Expr:
        # '-' binds looser than '^', so -x^2 reads as -(x^2)
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.advance()
            return Unary("neg", self.factor())
        e = self.base()
        kind, text, _ = self.peek()
        if kind == "op" and text == "^":
            self.advance()
            kind, text, off = self.peek()
            if kind != "number":
                raise ExprSyntaxError("exponent must be a numeric literal", self.source, off)
            self.advance()
            return Pow(e, float(text))
        return e

    def base(self) -> Expr:
        kind, text, off = self.advance()
        if kind == "number":
            return Const(float(text))
        if kind == "ident":
            if text in _FUNCTIONS:
                self.expect_op("(")
                arg = self.expr()
                self.expect_op(")")
                return Unary(text, arg)
            if text == self.var_name:
                return Var(text)
            raise ExprSyntaxError(
                f"unknown identifier {text!r} (declared variable is {self.var_name!r})",
                self.source, off)
        if kind == "op" and text == "(":
            e = self.expr()
            self.expect_op(")")
            return e
        if kind == "op" and text == "-":
            return Unary("neg", self.base())
        raise ExprSyntaxError(f"unexpected {text or 'end of input'!r}", self.source, off)


def parse(source: str, var_name: str) -> Expr:
    """Parse ``source`` into an AST whose single free variable is ``var_name``."""
    return _Parser(source, var_name).parse()


# --- compiled function-of-one-variable ------------------------------------

@dataclass(frozen=True)
class Func1:
    """An expression bundled with its first two exact derivatives.

    ``at_zero`` optionally supplies the value at exactly x == 0 for
    functions with a removable singularity there (the coupling
    conversions create these: V'(u)/u is 0/0 at the origin for even
    potentials, but the limit V''(0) exists).
    """

    expr: Expr
    d1: Expr
    d2: Expr
    var_name: str
    at_zero: float | None = None

    def __call__(self, x: float) -> float:
        if x == 0.0 and self.at_zero is not None:
            return self.at_zero
        return evaluate(self.expr, x)

    def deriv(self, x: float) -> float:
        return evaluate(self.d1, x)

    def deriv2(self, x: float) -> float:
        return evaluate(self.d2, x)

    @property
    def source(self) -> str:
        return to_source(self.expr)


def func_from_expr(e: Expr, var_name: str, at_zero: float | None = None) -> Func1:
    d1 = differentiate(e)
    return Func1(e, d1, differentiate(d1), var_name, at_zero)


def compile_func(source: str, var_name: str) -> Func1:
    """Parse ``source`` and attach its first and second derivatives."""
    return func_from_expr(parse(source, var_name), var_name)


def constant_func(value: float, var_name: str) -> Func1:
    return func_from_expr(Const(float(value)), var_name)
