"""Scalar expression trees in the variables x, y, t.

Trees are immutable.  They are built by :func:`parse` or by the smart
constructors (``add``, ``mul``, ...), which fold constants as they go.
Evaluation is vectorised over numpy arrays and broadcasts, so a subtree
that does not reference ``t`` is evaluated once per (x, y) point even when
the caller passes a full space-time grid.

Grammar (whitespace-insensitive)::

    expr     := term (("+" | "-") term)*
    term     := factor (("*" | "/") factor)*
    factor   := ("-" | "+") factor | base ("^" exponent)?
    exponent := factor                      (must fold to a constant)
    base     := number | ident | ident "(" args ")" | "(" expr ")"
    args     := expr ("," expr)*

Identifiers are the variables ``x``, ``y``, ``t`` and the constant ``pi``.
Functions: sin, cos, exp, log, sqrt, atan2(a, b), ramp(a) = max(a, 0),
step(a) (Heaviside, 1/2 at 0).
"""

from __future__ import annotations

import math
import re
from typing import Callable, Mapping, Sequence

import numpy as np

VARIABLES = ("x", "y", "t")

_PREC_ADD = 1
_PREC_MUL = 2
_PREC_NEG = 3
_PREC_POW = 4
_PREC_ATOM = 5


class ExprError(Exception):
    pass


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class ExprDomainError(ExprError, ArithmeticError):
    """Raised when evaluation leaves a function's domain."""

    def __init__(self, message: str, node: "Expr"):
        super().__init__(f"{message} in node `{node}`")
        self.node = node


class Expr:
    __slots__ = ("_fv",)

    precedence = _PREC_ATOM

    def children(self) -> tuple["Expr", ...]:
        return ()

    def free_vars(self) -> frozenset[str]:
        return self._fv

    def _seal(self):
        fv: frozenset[str] = frozenset()
        for c in self.children():
            fv = fv | c._fv
        object.__setattr__(self, "_fv", fv)

    def __str__(self) -> str:
        return to_text(self)

    def __repr__(self) -> str:
        return f"Expr({to_text(self)!r})"

    # arithmetic sugar; operands may be Expr or real numbers
    def __add__(self, other):
        return add(self, as_expr(other))

    def __radd__(self, other):
        return add(as_expr(other), self)

    def __sub__(self, other):
        return sub(self, as_expr(other))

    def __rsub__(self, other):
        return sub(as_expr(other), self)

    def __mul__(self, other):
        return mul(self, as_expr(other))

    def __rmul__(self, other):
        return mul(as_expr(other), self)

    def __truediv__(self, other):
        return div(self, as_expr(other))

    def __rtruediv__(self, other):
        return div(as_expr(other), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        return power(self, exponent)


class Const(Expr):
    __slots__ = ("value",)

    def __init__(self, value: float):
        object.__setattr__(self, "value", float(value))
        self._seal()

    def __setattr__(self, *_):
        raise AttributeError("Expr nodes are immutable")


class Var(Expr):
    __slots__ = ("name",)

    def __init__(self, name: str):
        if name not in VARIABLES:
            raise ExprError(f"unknown variable {name!r}")
        object.__setattr__(self, "name", name)
        object.__setattr__(self, "_fv", frozenset((name,)))

    def __setattr__(self, *_):
        raise AttributeError("Expr nodes are immutable")


class Unary(Expr):
    __slots__ = ("op", "arg")

    def __init__(self, op: str, arg: Expr):
        object.__setattr__(self, "op", op)
        object.__setattr__(self, "arg", arg)
        self._seal()

    def __setattr__(self, *_):
        raise AttributeError("Expr nodes are immutable")

    @property
    def precedence(self):
        return _PREC_NEG if self.op == "neg" else _PREC_ATOM

    def children(self):
        return (self.arg,)


class Binary(Expr):
    __slots__ = ("op", "left", "right")

    def __init__(self, op: str, left: Expr, right: Expr):
        object.__setattr__(self, "op", op)
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)
        self._seal()

    def __setattr__(self, *_):
        raise AttributeError("Expr nodes are immutable")

    @property
    def precedence(self):
        if self.op in ("add", "sub"):
            return _PREC_ADD
        if self.op in ("mul", "div"):
            return _PREC_MUL
        return _PREC_ATOM  # atan2 is printed as a call

    def children(self):
        return (self.left, self.right)


class Pow(Expr):
    """``base ^ exponent`` with a constant real exponent."""

    __slots__ = ("base", "exponent")
    precedence = _PREC_POW

    def __init__(self, base: Expr, exponent: float):
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "exponent", float(exponent))
        self._seal()

    def __setattr__(self, *_):
        raise AttributeError("Expr nodes are immutable")

    def children(self):
        return (self.base,)


class Kernel(Expr):
    """Opaque numeric coefficient ``fn(a0, a1, a2)`` applied to three argument trees.

    ``fn`` must be vectorised and broadcast like numpy ufuncs.  Partial
    derivatives are taken by central differences with step
    ``fd_step * scale``; ``partial`` lists the argument indices already
    differentiated.  Results are memoised per input array, which keeps
    repeated quadrature over the same grid cheap.
    """

    __slots__ = ("name", "fn", "args", "scale", "partial", "_cache")
    fd_step = 1e-6

    def __init__(self, name: str, fn: Callable, args: Sequence[Expr] | None = None,
                 scale: float = 1.0, partial: tuple[int, ...] = (), cache=None):
        object.__setattr__(self, "name", name)
        object.__setattr__(self, "fn", fn)
        object.__setattr__(self, "args", tuple(args) if args is not None else (X, Y, T))
        object.__setattr__(self, "scale", float(scale))
        object.__setattr__(self, "partial", tuple(partial))
        object.__setattr__(self, "_cache", cache if cache is not None else {})
        self._seal()

    def __setattr__(self, *_):
        raise AttributeError("Expr nodes are immutable")

    def children(self):
        return self.args

    def with_args(self, args: Sequence[Expr]) -> "Kernel":
        return Kernel(self.name, self.fn, args, self.scale, self.partial, self._cache)

    def differentiated(self, index: int) -> "Kernel":
        return Kernel(self.name, self.fn, self.args, self.scale,
                      self.partial + (index,), self._cache)

    def apply(self, a0, a1, a2):
        key = (self.partial, _array_key(a0), _array_key(a1), _array_key(a2))
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        value = _fd_partial(self.fn, self.partial, [a0, a1, a2], self.fd_step * self.scale)
        while len(self._cache) >= _KERNEL_CACHE_SIZE:
            self._cache.pop(next(iter(self._cache)))
        self._cache[key] = value
        return value


_KERNEL_CACHE_SIZE = 256


def _array_key(a):
    a = np.asarray(a, dtype=float)
    return (a.shape, hash(a.tobytes()))


def _fd_partial(fn, partial, args, h):
    if not partial:
        return fn(*args)
    i = partial[-1]
    rest = partial[:-1]
    hi = list(args)
    lo = list(args)
    hi[i] = args[i] + h
    lo[i] = args[i] - h
    return (_fd_partial(fn, rest, hi, h) - _fd_partial(fn, rest, lo, h)) / (2.0 * h)


X = Var("x")
Y = Var("y")
T = Var("t")
ZERO = Const(0.0)
ONE = Const(1.0)

_UNARY_FUNCS = ("sin", "cos", "exp", "log", "sqrt", "ramp", "step")
_BINARY_FUNCS = ("atan2",)


def as_expr(value) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, str):
        return parse(value)
    return Const(value)


def var(name: str) -> Var:
    return {"x": X, "y": Y, "t": T}[name] if name in VARIABLES else Var(name)


def _is_const(e, value=None):
    return isinstance(e, Const) and (value is None or e.value == value)


# ---------------------------------------------------------------------------
# smart constructors (constant folding only)

def add(a: Expr, b: Expr) -> Expr:
    if _is_const(a) and _is_const(b):
        return Const(a.value + b.value)
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    return Binary("add", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if _is_const(a) and _is_const(b):
        return Const(a.value - b.value)
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return neg(b)
    return Binary("sub", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if _is_const(a) and _is_const(b):
        return Const(a.value * b.value)
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return ZERO
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    if _is_const(a, -1.0):
        return neg(b)
    if _is_const(b, -1.0):
        return neg(a)
    return Binary("mul", a, b)


def div(a: Expr, b: Expr) -> Expr:
    if _is_const(a) and _is_const(b) and b.value != 0.0:
        return Const(a.value / b.value)
    if _is_const(a, 0.0) and not _is_const(b, 0.0):
        return ZERO
    if _is_const(b, 1.0):
        return a
    return Binary("div", a, b)


def neg(a: Expr) -> Expr:
    if _is_const(a):
        return Const(-a.value)
    if isinstance(a, Unary) and a.op == "neg":
        return a.arg
    return Unary("neg", a)


def power(a: Expr, exponent) -> Expr:
    if isinstance(exponent, Expr):
        if not isinstance(exponent, Const):
            raise ExprError("exponent must be a constant")
        exponent = exponent.value
    exponent = float(exponent)
    if exponent == 0.0:
        return ONE
    if exponent == 1.0:
        return a
    if _is_const(a):
        return Const(_eval_pow_scalar(a.value, exponent))
    return Pow(a, exponent)


def _eval_pow_scalar(base, exponent):
    if base < 0 and not float(exponent).is_integer():
        raise ExprError(f"negative base {base} with non-integer exponent {exponent}")
    if base == 0 and exponent < 0:
        raise ExprError("zero base with negative exponent")
    return base ** exponent


def func(name: str, *args: Expr) -> Expr:
    if name in _UNARY_FUNCS:
        if len(args) != 1:
            raise ExprError(f"{name} takes 1 argument, got {len(args)}")
        (a,) = args
        if _is_const(a):
            try:
                return Const(_UNARY_IMPL[name](np.float64(a.value), None))
            except ExprDomainError:
                pass  # keep the node; the error resurfaces at evaluation
        return Unary(name, a)
    if name in _BINARY_FUNCS:
        if len(args) != 2:
            raise ExprError(f"{name} takes 2 arguments, got {len(args)}")
        a, b = args
        if _is_const(a) and _is_const(b):
            return Const(math.atan2(a.value, b.value))
        return Binary(name, a, b)
    raise ExprError(f"unknown function {name!r}")


def sin(a):
    return func("sin", as_expr(a))


def cos(a):
    return func("cos", as_expr(a))


def exp(a):
    return func("exp", as_expr(a))


def log(a):
    return func("log", as_expr(a))


def sqrt(a):
    return func("sqrt", as_expr(a))


def atan2(a, b):
    return func("atan2", as_expr(a), as_expr(b))


def ramp(a):
    return func("ramp", as_expr(a))


def step(a):
    return func("step", as_expr(a))


# ---------------------------------------------------------------------------
# parsing

_TOKEN_RE = re.compile(r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
                       r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^(),]))")


def _tokenize(text: str):
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    def __init__(self, text: str, aliases: Mapping[str, Expr] | None = None):
        self.tokens = _tokenize(text)
        self.i = 0
        self.aliases = dict(aliases or {})

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, text, pos = self.take()
        if text != value:
            found = "end of input" if kind == "end" else repr(text)
            raise ExprSyntaxError(f"expected {value!r}, found {found}", pos)

    def parse(self) -> Expr:
        e = self.expr()
        kind, text, pos = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected token {text!r}", pos)
        return e

    def expr(self):
        e = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.term()
            e = add(e, rhs) if op == "+" else sub(e, rhs)
        return e

    def term(self):
        e = self.factor()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.factor()
            e = mul(e, rhs) if op == "*" else div(e, rhs)
        return e

    def factor(self):
        kind, text, pos = self.peek()
        if kind == "op" and text in ("-", "+"):
            self.take()
            inner = self.factor()
            return neg(inner) if text == "-" else inner
        b = self.base()
        if self.peek()[1] == "^" and self.peek()[0] == "op":
            self.take()
            epos = self.peek()[2]
            exponent = self.factor()
            if not isinstance(exponent, Const):
                raise ExprSyntaxError("exponent must be a constant", epos)
            try:
                return power(b, exponent.value)
            except ExprError as err:
                raise ExprSyntaxError(str(err), epos) from None
        return b

    def base(self):
        kind, text, pos = self.take()
        if kind == "num":
            return Const(float(text))
        if kind == "ident":
            if self.peek()[1] == "(" and self.peek()[0] == "op":
                if text not in _UNARY_FUNCS and text not in _BINARY_FUNCS:
                    raise ExprSyntaxError(f"unknown function {text!r}", pos)
                self.take()
                args = [self.expr()]
                while self.peek()[1] == ",":
                    self.take()
                    args.append(self.expr())
                self.expect(")")
                try:
                    return func(text, *args)
                except ExprError as err:
                    raise ExprSyntaxError(str(err), pos) from None
            if text == "pi":
                return Const(math.pi)
            if text in self.aliases:
                return self.aliases[text]
            if text in VARIABLES:
                return var(text)
            raise ExprSyntaxError(f"unknown identifier {text!r}", pos)
        if kind == "op" and text == "(":
            e = self.expr()
            self.expect(")")
            return e
        found = "end of input" if kind == "end" else repr(text)
        raise ExprSyntaxError(f"unexpected {found}", pos)


def parse(text: str, aliases: Mapping[str, Expr] | None = None) -> Expr:
    """Parse ``text`` into an expression tree.

    ``aliases`` binds extra identifiers to trees, e.g. ``{"r": sqrt(x^2 + y^2)}``.
    """
    return _Parser(text, aliases).parse()


# ---------------------------------------------------------------------------
# printing

def _fmt_number(v: float) -> str:
    if v.is_integer() and abs(v) < 1e15:
        s = str(int(v))
    else:
        s = repr(v)
    return f"({s})" if v < 0 or s.startswith("-") else s


def to_text(e: Expr) -> str:
    if isinstance(e, Const):
        return _fmt_number(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Unary):
        if e.op == "neg":
            inner = to_text(e.arg)
            if e.arg.precedence < _PREC_POW:
                inner = f"({inner})"
            return f"-{inner}"
        return f"{e.op}({to_text(e.arg)})"
    if isinstance(e, Pow):
        inner = to_text(e.base)
        if e.base.precedence <= _PREC_POW:
            inner = f"({inner})"
        return f"{inner}^{_fmt_number(e.exponent)}"
    if isinstance(e, Binary):
        if e.op == "atan2":
            return f"atan2({to_text(e.left)}, {to_text(e.right)})"
        sym = {"add": "+", "sub": "-", "mul": "*", "div": "/"}[e.op]
        lhs = to_text(e.left)
        rhs = to_text(e.right)
        if e.left.precedence < e.precedence:
            lhs = f"({lhs})"
        if e.right.precedence <= e.precedence:
            rhs = f"({rhs})"
        return f"{lhs} {sym} {rhs}"
    if isinstance(e, Kernel):
        d = "".join(VARIABLES[i] for i in e.partial)
        tag = f"{e.name}_{d}" if d else e.name
        return f"<{tag}>({', '.join(to_text(a) for a in e.args)})"
    raise TypeError(f"not an Expr: {e!r}")


# ---------------------------------------------------------------------------
# evaluation

def _check(node, bad, message):
    if np.any(bad):
        raise ExprDomainError(message, node)


def _u_log(a, node):
    if node is not None:
        _check(node, a <= 0, "log of non-positive value")
    elif a <= 0:
        raise ExprDomainError("log of non-positive value", Const(float(a)))
    return np.log(a)


def _u_sqrt(a, node):
    if node is not None:
        _check(node, a < 0, "sqrt of negative value")
    elif a < 0:
        raise ExprDomainError("sqrt of negative value", Const(float(a)))
    return np.sqrt(a)


_UNARY_IMPL = {
    "neg": lambda a, node: -a,
    "sin": lambda a, node: np.sin(a),
    "cos": lambda a, node: np.cos(a),
    "exp": lambda a, node: np.exp(a),
    "log": _u_log,
    "sqrt": _u_sqrt,
    "ramp": lambda a, node: np.maximum(a, 0.0),
    "step": lambda a, node: np.heaviside(a, 0.5),
}


def _eval(e: Expr, env, cache):
    key = id(e)
    hit = cache.get(key)
    if hit is not None:
        return hit[1]
    if isinstance(e, Const):
        val = e.value
    elif isinstance(e, Var):
        val = env[e.name]
    elif isinstance(e, Unary):
        val = _UNARY_IMPL[e.op](_eval(e.arg, env, cache), e)
    elif isinstance(e, Pow):
        b = _eval(e.base, env, cache)
        p = e.exponent
        if not p.is_integer():
            _check(e, np.asarray(b) < 0, "negative base with non-integer exponent")
        if p < 0:
            _check(e, np.asarray(b) == 0, "division by zero")
        val = b ** int(p) if p.is_integer() and p > 0 else np.power(b, p)
    elif isinstance(e, Binary):
        a = _eval(e.left, env, cache)
        b = _eval(e.right, env, cache)
        op = e.op
        if op == "add":
            val = a + b
        elif op == "sub":
            val = a - b
        elif op == "mul":
            val = a * b
        elif op == "div":
            _check(e, np.asarray(b) == 0, "division by zero")
            val = a / b
        else:
            val = np.arctan2(a, b)
    elif isinstance(e, Kernel):
        a0, a1, a2 = (_eval(a, env, cache) for a in e.args)
        val = e.apply(np.asarray(a0, dtype=float), np.asarray(a1, dtype=float),
                      np.asarray(a2, dtype=float))
        _check(e, ~np.isfinite(val), "non-finite kernel value")
    else:
        raise TypeError(f"not an Expr: {e!r}")
    cache[key] = (e, val)  # keep e alive so id() stays unique
    return val


def evaluate_array(e: Expr, x, y, t):
    """Evaluate on broadcastable arrays; result has the broadcast shape."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    shape = np.broadcast_shapes(x.shape, y.shape, t.shape)
    with np.errstate(all="ignore"):
        val = _eval(e, {"x": x, "y": y, "t": t}, {})
    return np.broadcast_to(np.asarray(val, dtype=float), shape)


def evaluate_many(exprs: Sequence[Expr], x, y, t):
    """Evaluate several trees sharing one cache (common subtrees computed once)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    shape = np.broadcast_shapes(x.shape, y.shape, t.shape)
    env = {"x": x, "y": y, "t": t}
    cache: dict = {}
    out = []
    with np.errstate(all="ignore"):
        for e in exprs:
            out.append(np.broadcast_to(np.asarray(_eval(e, env, cache), dtype=float), shape))
    return out


def evaluate(e: Expr, p: Sequence[float]) -> float:
    """Evaluate at a single point ``p = (x, y, t)``."""
    x, y, t = p
    return float(evaluate_array(e, x, y, t))


# ---------------------------------------------------------------------------
# differentiation and substitution

def differentiate(e: Expr, v: str) -> Expr:
    """Exact derivative of ``e`` with respect to variable ``v``."""
    if v not in VARIABLES:
        raise ExprError(f"unknown variable {v!r}")
    memo: dict[int, tuple[Expr, Expr]] = {}
    return _diff(e, v, memo)


def _diff(e: Expr, v: str, memo) -> Expr:
    hit = memo.get(id(e))
    if hit is not None:
        return hit[1]
    if v not in e.free_vars():
        out = ZERO
    elif isinstance(e, Var):
        out = ONE
    elif isinstance(e, Unary):
        a = e.arg
        da = _diff(a, v, memo)
        op = e.op
        if op == "neg":
            out = neg(da)
        elif op == "sin":
            out = mul(func("cos", a), da)
        elif op == "cos":
            out = neg(mul(func("sin", a), da))
        elif op == "exp":
            out = mul(e, da)
        elif op == "log":
            out = div(da, a)
        elif op == "sqrt":
            out = div(da, mul(Const(2.0), e))
        elif op == "ramp":
            out = mul(func("step", a), da)
        elif op == "step":
            out = ZERO  # almost everywhere
        else:
            raise ExprError(f"no derivative rule for {op}")
    elif isinstance(e, Pow):
        db = _diff(e.base, v, memo)
        p = e.exponent
        out = mul(mul(Const(p), power(e.base, p - 1.0)), db)
    elif isinstance(e, Binary):
        a, b = e.left, e.right
        da = _diff(a, v, memo)
        db = _diff(b, v, memo)
        op = e.op
        if op == "add":
            out = add(da, db)
        elif op == "sub":
            out = sub(da, db)
        elif op == "mul":
            out = add(mul(da, b), mul(a, db))
        elif op == "div":
            out = div(sub(mul(da, b), mul(a, db)), power(b, 2))
        else:  # atan2(a, b)
            out = div(sub(mul(b, da), mul(a, db)), add(power(a, 2), power(b, 2)))
    elif isinstance(e, Kernel):
        out = ZERO
        for i, arg in enumerate(e.args):
            darg = _diff(arg, v, memo)
            out = add(out, mul(e.differentiated(i), darg))
    else:
        raise TypeError(f"not an Expr: {e!r}")
    memo[id(e)] = (e, out)
    return out


def substitute(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Replace variables by expressions (composition with a map)."""
    memo: dict[int, tuple[Expr, Expr]] = {}

    def go(n: Expr) -> Expr:
        hit = memo.get(id(n))
        if hit is not None:
            return hit[1]
        if isinstance(n, Const):
            out = n
        elif isinstance(n, Var):
            out = mapping.get(n.name, n)
        elif isinstance(n, Unary):
            out = neg(go(n.arg)) if n.op == "neg" else func(n.op, go(n.arg))
        elif isinstance(n, Pow):
            out = power(go(n.base), n.exponent)
        elif isinstance(n, Binary):
            a, b = go(n.left), go(n.right)
            out = {"add": add, "sub": sub, "mul": mul, "div": div}.get(
                n.op, lambda p, q: func("atan2", p, q))(a, b)
        elif isinstance(n, Kernel):
            out = n.with_args([go(a) for a in n.args])
        else:
            raise TypeError(f"not an Expr: {n!r}")
        memo[id(n)] = (n, out)
        return out

    return go(e)


def central_difference(e: Expr, v: str, p: Sequence[float], h: float = 1e-5) -> float:
    idx = VARIABLES.index(v)
    hi = list(p)
    lo = list(p)
    hi[idx] += h
    lo[idx] -= h
    return (evaluate(e, hi) - evaluate(e, lo)) / (2.0 * h)
