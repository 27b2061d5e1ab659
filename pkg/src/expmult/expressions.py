"""Problem files: a small expression language with exact forward-mode gradients.

Grammar (line oriented, ``#`` starts a comment)::

    file        := header objective "subject_to:" constraint*
    header      := "vars:" ident+
    objective   := "minimize:" expr
    constraint  := ("ineq:" | "eq:") expr
    expr        := ["-"] term (("+"|"-") term)*
    term        := factor (("*"|"/") factor)*
    factor      := base ("^" integer)?
    base        := number | ident | "(" expr ")" | func "(" expr ")"
    func        := "exp" | "log" | "sin" | "cos" | "sqrt"

``ineq: E`` declares E <= 0 and ``eq: E`` declares E = 0.  Operators at equal
precedence associate left to right.  Only integer powers are allowed, which
keeps the differentiation rules total; fractional powers must be spelled with
sqrt / exp / log.  A leading minus parses as subtraction from zero.

Gradients are computed by a single forward pass with vector-valued dual
numbers, so they are exact up to rounding.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .problem import Array, ProblemSpec, ScalarFunction

FUNCTIONS = ("exp", "log", "sin", "cos", "sqrt")


class ParseError(Exception):
    """Syntax or semantic error in a problem file, with source location."""

    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"line {line}, column {col}: {message}")
        self.line = line
        self.col = col


class DomainError(ValueError):
    """Evaluation left the domain of a primitive (log, sqrt, division)."""

    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"line {line}, column {col}: {message}")
        self.line = line
        self.col = col


@dataclass(frozen=True)
class Loc:
    line: int
    col: int


_NOLOC = Loc(0, 0)


@dataclass(frozen=True)
class Expr:
    """Base expression node.  Location is metadata, not part of equality."""

    loc: Loc = field(default=_NOLOC, compare=False, kw_only=True)


@dataclass(frozen=True)
class Const(Expr):
    value: float


@dataclass(frozen=True)
class Var(Expr):
    index: int
    name: str


@dataclass(frozen=True)
class BinOp(Expr):
    op: str  # one of + - * /
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Power(Expr):
    base: Expr
    exponent: int


@dataclass(frozen=True)
class Call(Expr):
    func: str
    arg: Expr


@dataclass(frozen=True)
class ProblemSource:
    """Parsed problem file: variable names, objective and constraint trees."""

    var_names: tuple[str, ...]
    objective: Expr
    ineq_exprs: tuple[Expr, ...]
    eq_exprs: tuple[Expr, ...]

    def to_problem_spec(self) -> ProblemSpec:
        def wrap(e: Expr, name: str) -> ScalarFunction:
            return ScalarFunction(
                lambda x, e=e: eval_expr(e, x),
                lambda x, e=e: grad_expr(e, x),
                name=name,
            )

        return ProblemSpec(
            dim_x=len(self.var_names),
            objective=wrap(self.objective, "objective"),
            ineq=tuple(wrap(e, f"ineq_{k}") for k, e in enumerate(self.ineq_exprs)),
            eq=tuple(wrap(e, f"eq_{i}") for i, e in enumerate(self.eq_exprs)),
            names=self.var_names,
        )

    def to_text(self) -> str:
        lines = ["vars: " + " ".join(self.var_names)]
        lines.append("minimize: " + expr_to_str(self.objective))
        lines.append("subject_to:")
        for e in self.ineq_exprs:
            lines.append("  ineq: " + expr_to_str(e))
        for e in self.eq_exprs:
            lines.append("  eq: " + expr_to_str(e))
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Tokenizer
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<number>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[-+*/^()])
  | (?P<ws>\s+)
  | (?P<bad>.)
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # number | ident | op | end
    text: str
    line: int
    col: int


def _tok_desc(tok: "Token") -> str:
    return repr(tok.text) if tok.text else "end of expression"


def _tokenize(text: str, line: int, col0: int) -> list[Token]:
    tokens = []
    for match in _TOKEN_RE.finditer(text):
        kind = match.lastgroup
        if kind == "ws":
            continue
        col = col0 + match.start()
        if kind == "bad":
            raise ParseError(f"unexpected character {match.group()!r}", line, col + 1)
        tokens.append(Token(kind, match.group(), line, col + 1))
    tokens.append(Token("end", "", line, col0 + len(text) + 1))
    return tokens


class _ExprParser:
    """Recursive-descent parser over one expression's token list."""

    def __init__(self, tokens: list[Token], var_index: dict[str, int]):
        self.tokens = tokens
        self.pos = 0
        self.var_index = var_index

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def next(self) -> Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect_op(self, text: str) -> Token:
        tok = self.peek()
        if tok.kind != "op" or tok.text != text:
            raise ParseError(
                f"expected {text!r}, found {_tok_desc(tok)}", tok.line, tok.col
            )
        return self.next()

    def parse(self) -> Expr:
        e = self.expr()
        tok = self.peek()
        if tok.kind != "end":
            raise ParseError(f"unexpected {tok.text!r}", tok.line, tok.col)
        return e

    def expr(self) -> Expr:
        tok = self.peek()
        if tok.kind == "op" and tok.text == "-":
            self.next()
            t = self.term()
            left: Expr = BinOp("-", Const(0.0, loc=Loc(tok.line, tok.col)), t,
                               loc=Loc(tok.line, tok.col))
        else:
            left = self.term()
        while self.peek().kind == "op" and self.peek().text in "+-":
            op = self.next()
            right = self.term()
            left = BinOp(op.text, left, right, loc=Loc(op.line, op.col))
        return left

    def term(self) -> Expr:
        left = self.factor()
        while self.peek().kind == "op" and self.peek().text in "*/":
            op = self.next()
            right = self.factor()
            left = BinOp(op.text, left, right, loc=Loc(op.line, op.col))
        return left

    def factor(self) -> Expr:
        base = self.base()
        if self.peek().kind == "op" and self.peek().text == "^":
            caret = self.next()
            exponent = self.integer()
            return Power(base, exponent, loc=Loc(caret.line, caret.col))
        return base

    def integer(self) -> int:
        sign = 1
        tok = self.peek()
        if tok.kind == "op" and tok.text == "-":
            self.next()
            sign = -1
            tok = self.peek()
        if tok.kind != "number" or not re.fullmatch(r"\d+", tok.text):
            raise ParseError(
                f"exponent must be an integer literal, found {tok.text!r}",
                tok.line,
                tok.col,
            )
        self.next()
        return sign * int(tok.text)

    def base(self) -> Expr:
        tok = self.next()
        if tok.kind == "number":
            return Const(float(tok.text), loc=Loc(tok.line, tok.col))
        if tok.kind == "ident":
            if tok.text in FUNCTIONS:
                self.expect_op("(")
                arg = self.expr()
                self.expect_op(")")
                return Call(tok.text, arg, loc=Loc(tok.line, tok.col))
            index = self.var_index.get(tok.text)
            if index is None:
                raise ParseError(f"unknown identifier {tok.text!r}", tok.line, tok.col)
            return Var(index, tok.text, loc=Loc(tok.line, tok.col))
        if tok.kind == "op" and tok.text == "(":
            e = self.expr()
            self.expect_op(")")
            return e
        raise ParseError(
            f"expected a number, variable or '(', found {_tok_desc(tok)}",
            tok.line,
            tok.col,
        )


def parse_expression(text: str, var_names, line: int = 1, col0: int = 0) -> Expr:
    """Parse a single expression against an ordered list of variable names."""
    var_index = {name: i for i, name in enumerate(var_names)}
    return _ExprParser(_tokenize(text, line, col0), var_index).parse()


def parse_problem_file(text: str) -> ProblemSource:
    """Parse a complete problem file into expression trees."""
    var_names: list[str] | None = None
    objective: Expr | None = None
    in_constraints = False
    ineq_exprs: list[Expr] = []
    eq_exprs: list[Expr] = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        stripped = line.lstrip()
        indent = len(line) - len(stripped)

        def rest_of(keyword: str) -> tuple[str, int]:
            body = stripped[len(keyword):]
            return body, indent + len(keyword)

        if stripped.startswith("vars:"):
            if var_names is not None:
                raise ParseError("duplicate 'vars:' section", lineno, indent + 1)
            body, _ = rest_of("vars:")
            names = body.split()
            if not names:
                raise ParseError("at least one variable is required", lineno, indent + 1)
            seen = set()
            for name in names:
                if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", name):
                    raise ParseError(f"bad variable name {name!r}", lineno, indent + 1)
                if name in FUNCTIONS:
                    raise ParseError(
                        f"variable name {name!r} collides with a function", lineno,
                        indent + 1,
                    )
                if name in seen:
                    raise ParseError(f"duplicate variable {name!r}", lineno, indent + 1)
                seen.add(name)
            var_names = names
        elif stripped.startswith("minimize:"):
            if var_names is None:
                raise ParseError("'vars:' must come before 'minimize:'", lineno, indent + 1)
            if objective is not None:
                raise ParseError("duplicate 'minimize:' section", lineno, indent + 1)
            body, off = rest_of("minimize:")
            objective = parse_expression(body, var_names, lineno, off)
        elif stripped.startswith("subject_to:"):
            if objective is None:
                raise ParseError(
                    "'subject_to:' must come after 'minimize:'", lineno, indent + 1
                )
            if in_constraints:
                raise ParseError("duplicate 'subject_to:' section", lineno, indent + 1)
            body, _ = rest_of("subject_to:")
            if body.strip():
                raise ParseError(
                    "'subject_to:' takes no expression on the same line",
                    lineno, indent + 1,
                )
            in_constraints = True
        elif stripped.startswith("ineq:") or stripped.startswith("eq:"):
            if not in_constraints:
                raise ParseError(
                    "constraints must follow a 'subject_to:' line", lineno, indent + 1
                )
            keyword = "ineq:" if stripped.startswith("ineq:") else "eq:"
            body, off = rest_of(keyword)
            e = parse_expression(body, var_names, lineno, off)
            (ineq_exprs if keyword == "ineq:" else eq_exprs).append(e)
        else:
            raise ParseError(
                f"expected a section keyword, found {stripped.split()[0]!r}",
                lineno, indent + 1,
            )

    if var_names is None:
        raise ParseError("missing 'vars:' section", 1, 1)
    if objective is None:
        raise ParseError("missing 'minimize:' section", 1, 1)
    if not in_constraints:
        raise ParseError("missing 'subject_to:' section", 1, 1)
    return ProblemSource(
        var_names=tuple(var_names),
        objective=objective,
        ineq_exprs=tuple(ineq_exprs),
        eq_exprs=tuple(eq_exprs),
    )


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


class Dual:
    """Dual number with a vector derivative part, for forward-mode AD."""

    __slots__ = ("val", "dot")

    def __init__(self, val: float, dot: Array):
        self.val = val
        self.dot = dot

    def __add__(self, other: "Dual") -> "Dual":
        return Dual(self.val + other.val, self.dot + other.dot)

    def __sub__(self, other: "Dual") -> "Dual":
        return Dual(self.val - other.val, self.dot - other.dot)

    def __mul__(self, other: "Dual") -> "Dual":
        return Dual(self.val * other.val, self.val * other.dot + other.val * self.dot)

    def __truediv__(self, other: "Dual") -> "Dual":
        inv = 1.0 / other.val
        val = self.val * inv
        return Dual(val, (self.dot - val * other.dot) * inv)

    def ipow(self, n: int) -> "Dual":
        return Dual(self.val ** n, n * self.val ** (n - 1) * self.dot)


def _check_point(e: Expr, x) -> Array:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    needed = _max_var_index(e)
    if needed >= x.size:
        raise ValueError(
            f"expression references variable index {needed}, point has size {x.size}"
        )
    return x


def _max_var_index(e: Expr) -> int:
    match e:
        case Var(index=i):
            return i
        case BinOp(left=l, right=r):
            return max(_max_var_index(l), _max_var_index(r))
        case Power(base=b):
            return _max_var_index(b)
        case Call(arg=a):
            return _max_var_index(a)
        case _:
            return -1


def eval_expr(e: Expr, x) -> float:
    """Evaluate an expression at a point (IEEE double, left-to-right)."""
    x = _check_point(e, x)
    return _eval(e, x)


def _eval(e: Expr, x: Array) -> float:
    match e:
        case Const(value=v):
            return v
        case Var(index=i):
            return float(x[i])
        case BinOp(op="+", left=l, right=r):
            return _eval(l, x) + _eval(r, x)
        case BinOp(op="-", left=l, right=r):
            return _eval(l, x) - _eval(r, x)
        case BinOp(op="*", left=l, right=r):
            return _eval(l, x) * _eval(r, x)
        case BinOp(op="/", left=l, right=r):
            denom = _eval(r, x)
            if denom == 0.0:
                raise DomainError("division by zero", e.loc.line, e.loc.col)
            return _eval(l, x) / denom
        case Power(base=b, exponent=n):
            base = _eval(b, x)
            if base == 0.0 and n < 0:
                raise DomainError("zero raised to a negative power", e.loc.line, e.loc.col)
            return base ** n
        case Call(func=f, arg=a):
            v = _eval(a, x)
            return _apply(f, v, e)
        case _:  # pragma: no cover
            raise TypeError(f"unknown node {e!r}")


def _apply(func: str, v: float, e: Expr) -> float:
    if func == "exp":
        return math.exp(v)
    if func == "log":
        if v <= 0.0:
            raise DomainError(f"log of non-positive value {v!r}", e.loc.line, e.loc.col)
        return math.log(v)
    if func == "sin":
        return math.sin(v)
    if func == "cos":
        return math.cos(v)
    if func == "sqrt":
        if v < 0.0:
            raise DomainError(f"sqrt of negative value {v!r}", e.loc.line, e.loc.col)
        return math.sqrt(v)
    raise TypeError(f"unknown function {func!r}")  # pragma: no cover


def grad_expr(e: Expr, x) -> Array:
    """Exact gradient of an expression by one forward dual-number pass."""
    x = _check_point(e, x)
    return _eval_dual(e, x, x.size).dot


def _eval_dual(e: Expr, x: Array, n: int) -> Dual:
    match e:
        case Const(value=v):
            return Dual(v, np.zeros(n))
        case Var(index=i):
            seed = np.zeros(n)
            seed[i] = 1.0
            return Dual(float(x[i]), seed)
        case BinOp(op="+", left=l, right=r):
            return _eval_dual(l, x, n) + _eval_dual(r, x, n)
        case BinOp(op="-", left=l, right=r):
            return _eval_dual(l, x, n) - _eval_dual(r, x, n)
        case BinOp(op="*", left=l, right=r):
            return _eval_dual(l, x, n) * _eval_dual(r, x, n)
        case BinOp(op="/", left=l, right=r):
            denom = _eval_dual(r, x, n)
            if denom.val == 0.0:
                raise DomainError("division by zero", e.loc.line, e.loc.col)
            return _eval_dual(l, x, n) / denom
        case Power(base=b, exponent=k):
            base = _eval_dual(b, x, n)
            if base.val == 0.0 and k < 1:
                raise DomainError(
                    "zero raised to a non-positive power is not differentiable here",
                    e.loc.line, e.loc.col,
                )
            return base.ipow(k)
        case Call(func=f, arg=a):
            u = _eval_dual(a, x, n)
            if f == "exp":
                ev = math.exp(u.val)
                return Dual(ev, ev * u.dot)
            if f == "log":
                if u.val <= 0.0:
                    raise DomainError(
                        f"log of non-positive value {u.val!r}", e.loc.line, e.loc.col
                    )
                return Dual(math.log(u.val), u.dot / u.val)
            if f == "sin":
                return Dual(math.sin(u.val), math.cos(u.val) * u.dot)
            if f == "cos":
                return Dual(math.cos(u.val), -math.sin(u.val) * u.dot)
            if f == "sqrt":
                if u.val < 0.0:
                    raise DomainError(
                        f"sqrt of negative value {u.val!r}", e.loc.line, e.loc.col
                    )
                if u.val == 0.0:
                    raise DomainError(
                        "sqrt is not differentiable at zero", e.loc.line, e.loc.col
                    )
                root = math.sqrt(u.val)
                return Dual(root, u.dot / (2.0 * root))
            raise TypeError(f"unknown function {f!r}")  # pragma: no cover
        case _:  # pragma: no cover
            raise TypeError(f"unknown node {e!r}")


# ---------------------------------------------------------------------------
# Printing
# ---------------------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def expr_to_str(e: Expr) -> str:
    """Render an expression; reparsing the result gives a structurally equal tree."""
    return _render(e, 0)


def _render(e: Expr, parent_prec: int, right_side: bool = False) -> str:
    match e:
        case Const(value=v):
            if v == int(v) and abs(v) < 1e16:
                return str(int(v))
            return repr(v)
        case Var(name=name):
            return name
        case BinOp(op=op, left=Const(value=0.0), right=r) if op == "-":
            # unary minus; safe unparenthesized only at top level or as the
            # left operand of + / -
            inner = _render(r, 2, right_side=True)
            text = f"-{inner}"
            need = right_side or parent_prec >= 2
            return f"({text})" if need else text
        case BinOp(op=op, left=l, right=r):
            prec = _PREC[op]
            left = _render(l, prec)
            right = _render(r, prec, right_side=True)
            text = f"{left} {op} {right}"
            need = prec < parent_prec or (right_side and prec == parent_prec)
            return f"({text})" if need else text
        case Power(base=b, exponent=n):
            base = _render(b, 4)
            return f"{base}^{n}"
        case Call(func=f, arg=a):
            return f"{f}({_render(a, 0)})"
        case _:  # pragma: no cover
            raise TypeError(f"unknown node {e!r}")
