"""Expression trees for scalar right-hand sides F(w3, w2, w1, w0, x, t).

The variables w3..w0 stand for the third, second, first and zeroth spatial
derivative of the unknown; x and t are the space and time coordinates.  Trees
support exact symbolic differentiation with respect to any variable and
pointwise evaluation over numpy arrays.  A small recursive-descent parser
turns text like ``-w3 + w2 + 2*w0*w1`` into trees; auxiliary coefficient
definitions in x and t are substituted at parse time.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

VARIABLES = ("w3", "w2", "w1", "w0", "x", "t")
FUNCTIONS = ("exp", "log", "sin", "cos")

DIV_TOL = 1e-12


def _guard(values, predicate_bad: np.ndarray | bool, message: str):
    """Raise DomainError with the first offending grid location."""
    if np.ndim(predicate_bad) == 0:
        if bool(predicate_bad):
            raise DomainError(message)
        return
    if predicate_bad.any():
        idx = int(np.argmax(predicate_bad))
        m = len(predicate_bad)
        raise DomainError(message, x=2.0 * math.pi * idx / m, index=idx)


def _is_real(arr) -> bool:
    return not np.iscomplexobj(arr)


class Expr:
    """Base expression node.  Subclasses are frozen dataclasses."""

    def diff(self, var: str) -> "Expr":
        raise NotImplementedError

    def evaluate(self, env: dict):
        raise NotImplementedError

    def variables(self) -> set:
        raise NotImplementedError

    def __str__(self) -> str:
        raise NotImplementedError


def _fmt_number(v: float) -> str:
    if v == int(v) and abs(v) < 1e12:
        return str(int(v))
    return repr(v)


@dataclass(frozen=True)
class Const(Expr):
    value: float

    def diff(self, var):
        return Const(0.0)

    def evaluate(self, env):
        return self.value

    def variables(self):
        return set()

    def __str__(self):
        return _fmt_number(self.value)


@dataclass(frozen=True)
class Var(Expr):
    name: str

    def __post_init__(self):
        if self.name not in VARIABLES:
            raise ValueError(f"unknown variable {self.name!r}; expected one of {VARIABLES}")

    def diff(self, var):
        return Const(1.0 if var == self.name else 0.0)

    def evaluate(self, env):
        return env[self.name]

    def variables(self):
        return {self.name}

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Add(Expr):
    left: Expr
    right: Expr

    def diff(self, var):
        return add(self.left.diff(var), self.right.diff(var))

    def evaluate(self, env):
        return self.left.evaluate(env) + self.right.evaluate(env)

    def variables(self):
        return self.left.variables() | self.right.variables()

    def __str__(self):
        return f"{self.left} + {self.right}"


@dataclass(frozen=True)
class Sub(Expr):
    left: Expr
    right: Expr

    def diff(self, var):
        return sub(self.left.diff(var), self.right.diff(var))

    def evaluate(self, env):
        return self.left.evaluate(env) - self.right.evaluate(env)

    def variables(self):
        return self.left.variables() | self.right.variables()

    def __str__(self):
        r = str(self.right)
        if isinstance(self.right, (Add, Sub)):
            r = f"({r})"
        return f"{self.left} - {r}"


def _paren_factor(e: Expr) -> str:
    s = str(e)
    if isinstance(e, (Add, Sub)) or s.startswith("-"):
        return f"({s})"
    return s


@dataclass(frozen=True)
class Mul(Expr):
    left: Expr
    right: Expr

    def diff(self, var):
        return add(
            mul(self.left.diff(var), self.right),
            mul(self.left, self.right.diff(var)),
        )

    def evaluate(self, env):
        return self.left.evaluate(env) * self.right.evaluate(env)

    def variables(self):
        return self.left.variables() | self.right.variables()

    def __str__(self):
        return f"{_paren_factor(self.left)}*{_paren_factor(self.right)}"


@dataclass(frozen=True)
class Div(Expr):
    left: Expr
    right: Expr

    def diff(self, var):
        # (u/v)' = u'/v - u v'/v^2
        return sub(
            div(self.left.diff(var), self.right),
            div(mul(self.left, self.right.diff(var)), mul(self.right, self.right)),
        )

    def evaluate(self, env):
        num = self.left.evaluate(env)
        den = self.right.evaluate(env)
        if _is_real(den):
            _guard(den, np.abs(np.asarray(den)) < DIV_TOL, "division by a vanishing denominator")
        return num / den

    def variables(self):
        return self.left.variables() | self.right.variables()

    def __str__(self):
        return f"{_paren_factor(self.left)}/{_paren_factor(self.right)}"


@dataclass(frozen=True)
class Pow(Expr):
    """Integer power; exponent is part of the node, not a child."""

    base: Expr
    exponent: int

    def diff(self, var):
        k = self.exponent
        if k == 0:
            return Const(0.0)
        return mul(mul(Const(float(k)), power(self.base, k - 1)), self.base.diff(var))

    def evaluate(self, env):
        b = np.asarray(self.base.evaluate(env))
        if self.exponent < 0 and _is_real(b):
            _guard(b, np.abs(b) < DIV_TOL, "negative power of a vanishing base")
        return b ** self.exponent

    def variables(self):
        return self.base.variables()

    def __str__(self):
        return f"{_paren_factor(self.base)}^{self.exponent}"


@dataclass(frozen=True)
class RealPow(Expr):
    """Real (non-integer) power; requires a strictly positive base."""

    base: Expr
    exponent: float

    def diff(self, var):
        p = self.exponent
        return mul(mul(Const(p), RealPow(self.base, p - 1.0)), self.base.diff(var))

    def evaluate(self, env):
        b = np.asarray(self.base.evaluate(env))
        if _is_real(b):
            _guard(b, b <= 0.0, f"real power {self.exponent} of a nonpositive base")
        return b ** self.exponent

    def variables(self):
        return self.base.variables()

    def __str__(self):
        return f"{_paren_factor(self.base)}^{_fmt_number(self.exponent)}"


@dataclass(frozen=True)
class Exp(Expr):
    arg: Expr

    def diff(self, var):
        return mul(self, self.arg.diff(var))

    def evaluate(self, env):
        return np.exp(self.arg.evaluate(env))

    def variables(self):
        return self.arg.variables()

    def __str__(self):
        return f"exp({self.arg})"


@dataclass(frozen=True)
class Log(Expr):
    arg: Expr

    def diff(self, var):
        return div(self.arg.diff(var), self.arg)

    def evaluate(self, env):
        a = np.asarray(self.arg.evaluate(env))
        if _is_real(a):
            _guard(a, a <= 0.0, "log of a nonpositive value")
        return np.log(a)

    def variables(self):
        return self.arg.variables()

    def __str__(self):
        return f"log({self.arg})"


@dataclass(frozen=True)
class Sin(Expr):
    arg: Expr

    def diff(self, var):
        return mul(Cos(self.arg), self.arg.diff(var))

    def evaluate(self, env):
        return np.sin(self.arg.evaluate(env))

    def variables(self):
        return self.arg.variables()

    def __str__(self):
        return f"sin({self.arg})"


@dataclass(frozen=True)
class Cos(Expr):
    arg: Expr

    def diff(self, var):
        return mul(Const(-1.0), mul(Sin(self.arg), self.arg.diff(var)))

    def evaluate(self, env):
        return np.cos(self.arg.evaluate(env))

    def variables(self):
        return self.arg.variables()

    def __str__(self):
        return f"cos({self.arg})"


# --------------------------------------------------- simplifying constructors


def _const_of(e: Expr) -> float | None:
    return e.value if isinstance(e, Const) else None


def add(a: Expr, b: Expr) -> Expr:
    ca, cb = _const_of(a), _const_of(b)
    if ca is not None and cb is not None:
        return Const(ca + cb)
    if ca == 0.0:
        return b
    if cb == 0.0:
        return a
    return Add(a, b)


def sub(a: Expr, b: Expr) -> Expr:
    ca, cb = _const_of(a), _const_of(b)
    if ca is not None and cb is not None:
        return Const(ca - cb)
    if cb == 0.0:
        return a
    if ca == 0.0:
        return mul(Const(-1.0), b)
    return Sub(a, b)


def mul(a: Expr, b: Expr) -> Expr:
    ca, cb = _const_of(a), _const_of(b)
    if ca is not None and cb is not None:
        return Const(ca * cb)
    if ca == 0.0 or cb == 0.0:
        return Const(0.0)
    if ca == 1.0:
        return b
    if cb == 1.0:
        return a
    if cb is not None:  # constants read better on the left
        return Mul(Const(cb), a)
    return Mul(a, b)


def div(a: Expr, b: Expr) -> Expr:
    ca, cb = _const_of(a), _const_of(b)
    if cb is not None and cb != 0.0:
        if ca is not None:
            return Const(ca / cb)
        if cb == 1.0:
            return a
    if ca == 0.0:
        return Const(0.0)
    return Div(a, b)


def power(base: Expr, exponent) -> Expr:
    if isinstance(exponent, int) or float(exponent).is_integer():
        k = int(exponent)
        if k == 0:
            return Const(1.0)
        if k == 1:
            return base
        c = _const_of(base)
        if c is not None:
            return Const(c ** k)
        return Pow(base, k)
    return RealPow(base, float(exponent))


# ------------------------------------------------------------------- parser


_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>\*\*|[+\-*/^()]))"
)


def _tokenize(text: str) -> list[tuple[str, str]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            rest = text[pos:].strip()
            if not rest:
                break
            raise ValueError(f"cannot tokenize expression near {rest[:20]!r}")
        if m.lastgroup is not None:
            tokens.append((m.lastgroup, m.group(m.lastgroup)))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, tokens: list[tuple[str, str]], names: dict[str, Expr]):
        self.tokens = tokens
        self.pos = 0
        self.names = names  # coefficient definitions, substituted inline

    def peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else (None, None)

    def take(self, value: str | None = None):
        kind, tok = self.peek()
        if kind is None:
            raise ValueError("unexpected end of expression")
        if value is not None and tok != value:
            raise ValueError(f"expected {value!r}, found {tok!r}")
        self.pos += 1
        return tok

    def parse(self) -> Expr:
        e = self.expr()
        if self.pos != len(self.tokens):
            raise ValueError(f"trailing input at token {self.tokens[self.pos][1]!r}")
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.take()
            rhs = self.term()
            e = add(e, rhs) if op == "+" else sub(e, rhs)
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.peek()[1] in ("*", "/"):
            op = self.take()
            rhs = self.unary()
            e = mul(e, rhs) if op == "*" else div(e, rhs)
        return e

    def unary(self) -> Expr:
        if self.peek()[1] == "-":
            self.take()
            return mul(Const(-1.0), self.unary())
        if self.peek()[1] == "+":
            self.take()
            return self.unary()
        return self.power_term()

    def power_term(self) -> Expr:
        base = self.atom()
        if self.peek()[1] in ("^", "**"):
            self.take()
            exp = self.unary()  # right-associative, allows -2 exponents
            c = _const_of(exp)
            if c is None:
                raise ValueError("exponents must be numeric literals")
            return power(base, c)
        return base

    def atom(self) -> Expr:
        kind, tok = self.peek()
        if kind == "num":
            self.take()
            return Const(float(tok))
        if kind == "ident":
            self.take()
            if tok in FUNCTIONS:
                self.take("(")
                arg = self.expr()
                self.take(")")
                return {"exp": Exp, "log": Log, "sin": Sin, "cos": Cos}[tok](arg)
            if tok in VARIABLES:
                return Var(tok)
            if tok in self.names:
                return self.names[tok]
            raise ValueError(f"unknown symbol {tok!r}")
        if tok == "(":
            self.take()
            e = self.expr()
            self.take(")")
            return e
        raise ValueError(f"unexpected token {tok!r}")


def parse_expression(text: str, names: dict[str, Expr] | None = None) -> Expr:
    """Parse an infix expression over w3..w0, x, t and any named coefficients."""
    return _Parser(_tokenize(text), names or {}).parse()


def parse_definitions(text: str) -> tuple[Expr, dict[str, Expr]]:
    """Parse a multi-line definition block ending in ``F = <expr>``.

    Lines before F define named coefficients in x and t (later lines may use
    earlier names); they are substituted into F.  Returns (F, definitions).
    """
    names: dict[str, Expr] = {}
    rhs = None
    for raw in re.split(r"[;\n]", text):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"expected 'name = expression', got {line!r}")
        lhs, body = line.split("=", 1)
        lhs = lhs.strip()
        e = parse_expression(body, names)
        if lhs == "F":
            rhs = e
        else:
            if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", lhs):
                raise ValueError(f"bad coefficient name {lhs!r}")
            bad = e.variables() & {"w0", "w1", "w2", "w3"}
            if bad:
                raise ValueError(f"coefficient {lhs!r} may only depend on x and t, uses {sorted(bad)}")
            names[lhs] = e
    if rhs is None:
        raise ValueError("no 'F = ...' line found")
    return rhs, names


# ------------------------------------------------------------ tree utilities


def substitute(e: Expr, var: str, replacement: Expr) -> Expr:
    """Replace every occurrence of a variable by another expression."""
    if isinstance(e, Const):
        return e
    if isinstance(e, Var):
        return replacement if e.name == var else e
    if isinstance(e, Add):
        return add(substitute(e.left, var, replacement), substitute(e.right, var, replacement))
    if isinstance(e, Sub):
        return sub(substitute(e.left, var, replacement), substitute(e.right, var, replacement))
    if isinstance(e, Mul):
        return mul(substitute(e.left, var, replacement), substitute(e.right, var, replacement))
    if isinstance(e, Div):
        return div(substitute(e.left, var, replacement), substitute(e.right, var, replacement))
    if isinstance(e, Pow):
        return power(substitute(e.base, var, replacement), e.exponent)
    if isinstance(e, RealPow):
        return RealPow(substitute(e.base, var, replacement), e.exponent)
    if isinstance(e, Exp):
        return Exp(substitute(e.arg, var, replacement))
    if isinstance(e, Log):
        return Log(substitute(e.arg, var, replacement))
    if isinstance(e, Sin):
        return Sin(substitute(e.arg, var, replacement))
    if isinstance(e, Cos):
        return Cos(substitute(e.arg, var, replacement))
    raise TypeError(f"unknown node type {type(e).__name__}")


def collect_terms(e: Expr, sign: float = 1.0) -> list[Expr]:
    """Flatten a sum into signed terms (no other rewriting)."""
    if isinstance(e, Add):
        return collect_terms(e.left, sign) + collect_terms(e.right, sign)
    if isinstance(e, Sub):
        return collect_terms(e.left, sign) + collect_terms(e.right, -sign)
    if sign == 1.0:
        return [e]
    return [mul(Const(-1.0), e)]


def _match_constant_times_slot(term: Expr) -> tuple[float, int] | None:
    """Recognize ``c1 * c2 * ... * w_p`` with numeric constants, else None."""
    c = 1.0
    e = term
    while isinstance(e, Mul):
        if isinstance(e.left, Const):
            c *= e.left.value
            e = e.right
        elif isinstance(e.right, Const):
            c *= e.right.value
            e = e.left
        else:
            return None
    if isinstance(e, Var) and e.name.startswith("w"):
        return c, int(e.name[1])
    return None


def linear_constant_part(e: Expr) -> tuple[dict[int, float], Expr]:
    """Split off terms of the form ``c * w_p`` with constant c.

    Returns ({p: c}, remainder).  Terms whose coefficient depends on x or t
    stay in the remainder; so does everything nonlinear.
    """
    coeffs: dict[int, float] = {}
    rest: list[Expr] = []
    for term in collect_terms(e):
        hit = _match_constant_times_slot(term)
        if hit is not None:
            c, p = hit
            coeffs[p] = coeffs.get(p, 0.0) + c
        else:
            rest.append(term)
    remainder = Const(0.0)
    for r in rest:
        remainder = add(remainder, r)
    return coeffs, remainder
