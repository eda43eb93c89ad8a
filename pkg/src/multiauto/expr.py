"""Closed-form function expressions.

A :class:`FunctionExpr` is an immutable expression tree mapping a time point
``t`` in R^n and a state ``x`` in R^p to a vector in R^q.  Trees are built
either in Python (operator overloading on :class:`Node`) or parsed from a
prefix notation such as::

    (sin (div 1 (add 2 (cos t0) (cos (mul 1.4142135623730951 t0)))))

Variables are ``t0 .. t{n-1}`` (time), ``x0 .. x{p-1}`` (state) and ``v``
(the dummy variable of an ``integral`` node).  Vector-valued expressions
use a top-level ``(vec e1 e2 ...)``.

Evaluation is vectorised: ``evaluate(T, X)`` broadcasts the leading axes of
``T`` (shape ``(..., n)``) against those of ``X`` (shape ``(..., p)``).
Excluded points (division by zero, ln of a non-positive number, sqrt of a
negative number, overflow) raise :class:`SingularPoint`; NaN is never
returned.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionMismatch, ParseError, SingularPoint, SupBoundViolation

UNARY = ("neg", "sin", "cos", "exp", "ln", "abs", "sqrt", "atan", "tanh", "floor")
BINARY = ("sub", "div")
NARY = ("add", "mul", "min", "max")
LEAVES = ("const", "t", "x", "v")

_NUMPY_UNARY = {
    "neg": np.negative,
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "abs": np.abs,
    "atan": np.arctan,
    "tanh": np.tanh,
    "floor": np.floor,
}

# composite Gauss-Legendre rule used by integral nodes
INTEGRAL_ORDER = 10
_GL_X, _GL_W = np.polynomial.legendre.leggauss(INTEGRAL_ORDER)


@dataclass(frozen=True)
class Node:
    op: str
    args: tuple = ()
    value: float | int | None = None

    # Python-side construction helpers -----------------------------------
    def __add__(self, other):
        return Node("add", (self, as_node(other)))

    def __radd__(self, other):
        return Node("add", (as_node(other), self))

    def __sub__(self, other):
        return Node("sub", (self, as_node(other)))

    def __rsub__(self, other):
        return Node("sub", (as_node(other), self))

    def __mul__(self, other):
        return Node("mul", (self, as_node(other)))

    def __rmul__(self, other):
        return Node("mul", (as_node(other), self))

    def __truediv__(self, other):
        return Node("div", (self, as_node(other)))

    def __rtruediv__(self, other):
        return Node("div", (as_node(other), self))

    def __neg__(self):
        return Node("neg", (self,))

    def __str__(self):
        return to_prefix(self)


def as_node(value) -> Node:
    if isinstance(value, Node):
        return value
    return Node("const", (), float(value))


def const(c: float) -> Node:
    return Node("const", (), float(c))


def T(i: int = 0) -> Node:
    return Node("t", (), int(i))


def X(i: int = 0) -> Node:
    return Node("x", (), int(i))


V = Node("v", (), None)


def _unary(op):
    def build(a):
        return Node(op, (as_node(a),))

    build.__name__ = op
    return build


sin = _unary("sin")
cos = _unary("cos")
exp = _unary("exp")
ln = _unary("ln")
fabs = _unary("abs")
sqrt = _unary("sqrt")
atan = _unary("atan")
tanh = _unary("tanh")
floor = _unary("floor")


def fmin(*args) -> Node:
    return Node("min", tuple(as_node(a) for a in args))


def fmax(*args) -> Node:
    return Node("max", tuple(as_node(a) for a in args))


def add(*args) -> Node:
    return Node("add", tuple(as_node(a) for a in args))


def mul(*args) -> Node:
    return Node("mul", tuple(as_node(a) for a in args))


def integral(lo, hi, body) -> Node:
    """Definite integral of ``body`` (a tree in the dummy variable ``v``)."""
    return Node("integral", (as_node(lo), as_node(hi), as_node(body)))


# ---------------------------------------------------------------------------
# printing and parsing

def _fmt_number(v: float) -> str:
    v = float(v)
    if v == 0.0:
        return "0"
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def to_prefix(node: Node) -> str:
    if node.op == "const":
        return _fmt_number(node.value)
    if node.op == "t":
        return f"t{node.value}"
    if node.op == "x":
        return f"x{node.value}"
    if node.op == "v":
        return "v"
    return "(" + " ".join([node.op] + [to_prefix(a) for a in node.args]) + ")"


_TOKEN = re.compile(r"\(|\)|[^\s()]+")
_NAMED_CONSTANTS = {"pi": math.pi, "e": math.e}


def _tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text)


def parse_node(text: str) -> Node:
    tokens = _tokenize(text)
    if not tokens:
        raise ParseError("empty expression")
    node, pos = _parse(tokens, 0)
    if pos != len(tokens):
        raise ParseError(f"trailing tokens after expression: {' '.join(tokens[pos:])}")
    return node


def _parse(tokens, pos):
    tok = tokens[pos]
    if tok == ")":
        raise ParseError("unexpected ')'")
    if tok != "(":
        return _parse_atom(tok), pos + 1
    if pos + 1 >= len(tokens):
        raise ParseError("unterminated expression")
    op = tokens[pos + 1]
    pos += 2
    args = []
    while True:
        if pos >= len(tokens):
            raise ParseError("missing ')'")
        if tokens[pos] == ")":
            pos += 1
            break
        arg, pos = _parse(tokens, pos)
        args.append(arg)
    return _make_op(op, args), pos


def _parse_atom(tok: str) -> Node:
    if tok in _NAMED_CONSTANTS:
        return const(_NAMED_CONSTANTS[tok])
    if tok == "v":
        return V
    m = re.fullmatch(r"([tx])(\d+)", tok)
    if m:
        return Node(m.group(1), (), int(m.group(2)))
    try:
        return const(float(tok))
    except ValueError:
        raise ParseError(f"unknown symbol {tok!r}") from None


def _make_op(op: str, args: list[Node]) -> Node:
    n = len(args)
    if op in UNARY and n != 1:
        raise ParseError(f"{op} takes one argument, got {n}")
    if op in BINARY and n != 2:
        raise ParseError(f"{op} takes two arguments, got {n}")
    if op in NARY and n < 1:
        raise ParseError(f"{op} needs at least one argument")
    if op == "integral" and n != 3:
        raise ParseError("integral takes (integral lo hi body)")
    if op == "vec":
        raise ParseError("vec is only allowed at top level")
    if op not in UNARY + BINARY + NARY + ("integral",):
        raise ParseError(f"unknown operator {op!r}")
    return Node(op, tuple(args))


# ---------------------------------------------------------------------------
# tree utilities

def max_index(node: Node, kind: str) -> int:
    """Largest variable index of ``kind`` ('t' or 'x') used, or -1."""
    if node.op == kind:
        return int(node.value)
    best = -1
    for a in node.args:
        best = max(best, max_index(a, kind))
    return best


def substitute(node: Node, t_map: Sequence[Node] | None = None,
               x_map: Sequence[Node] | None = None) -> Node:
    """Replace time/state variables by sub-trees (``None`` keeps them)."""
    if node.op == "t" and t_map is not None:
        return t_map[node.value]
    if node.op == "x" and x_map is not None:
        return x_map[node.value]
    if not node.args:
        return node
    return Node(node.op, tuple(substitute(a, t_map, x_map) for a in node.args), node.value)


def count_nodes(node: Node) -> int:
    return 1 + sum(count_nodes(a) for a in node.args)


# ---------------------------------------------------------------------------
# evaluation

class _Env:
    __slots__ = ("t", "x", "v")

    def __init__(self, t, x, v=None):
        self.t = t
        self.x = x
        self.v = v

    def expanded(self, v):
        return _Env([np.expand_dims(np.asarray(a), -1) for a in self.t],
                    [np.expand_dims(np.asarray(a), -1) for a in self.x], v)


def _singular(msg):
    raise SingularPoint(msg)


def _eval(node: Node, env: _Env):
    op = node.op
    if op == "const":
        return node.value
    if op == "t":
        return env.t[node.value]
    if op == "x":
        return env.x[node.value]
    if op == "v":
        if env.v is None:
            raise ParseError("dummy variable v used outside an integral")
        return env.v
    if op in _NUMPY_UNARY:
        with np.errstate(over="ignore", invalid="ignore"):
            return _NUMPY_UNARY[op](_eval(node.args[0], env))
    if op == "ln":
        a = np.asarray(_eval(node.args[0], env), dtype=float)
        if np.any(a <= 0):
            _singular("ln of a non-positive value")
        return np.log(a)
    if op == "sqrt":
        a = np.asarray(_eval(node.args[0], env), dtype=float)
        if np.any(a < 0):
            _singular("sqrt of a negative value")
        return np.sqrt(a)
    if op == "add":
        out = _eval(node.args[0], env)
        for a in node.args[1:]:
            out = out + _eval(a, env)
        return out
    if op == "mul":
        out = _eval(node.args[0], env)
        for a in node.args[1:]:
            with np.errstate(over="ignore", invalid="ignore"):
                out = out * _eval(a, env)
        return out
    if op == "sub":
        return _eval(node.args[0], env) - _eval(node.args[1], env)
    if op == "div":
        num = _eval(node.args[0], env)
        den = np.asarray(_eval(node.args[1], env), dtype=float)
        if np.any(den == 0):
            _singular("division by zero")
        with np.errstate(over="ignore"):
            return num / den
    if op == "min":
        out = _eval(node.args[0], env)
        for a in node.args[1:]:
            out = np.minimum(out, _eval(a, env))
        return out
    if op == "max":
        out = _eval(node.args[0], env)
        for a in node.args[1:]:
            out = np.maximum(out, _eval(a, env))
        return out
    if op == "integral":
        return _eval_integral(node, env)
    raise ParseError(f"unknown operator {op!r}")


def _eval_integral(node: Node, env: _Env):
    lo = np.asarray(_eval(node.args[0], env), dtype=float)
    hi = np.asarray(_eval(node.args[1], env), dtype=float)
    lo, hi = np.broadcast_arrays(lo, hi)
    length = hi - lo
    span = float(np.max(np.abs(length))) if length.size else 0.0
    panels = max(1, int(math.ceil(span)))
    # composite nodes on [0, 1]
    edges = np.arange(panels) / panels
    xi = (edges[:, None] + (_GL_X[None, :] + 1.0) / (2.0 * panels)).ravel()
    wi = np.tile(_GL_W / (2.0 * panels), panels)
    v = lo[..., None] + length[..., None] * xi
    body = _eval(node.args[2], env.expanded(v))
    body = np.broadcast_to(body, v.shape)
    return np.sum(body * wi, axis=-1) * length


@dataclass(frozen=True)
class FunctionExpr:
    """Evaluable map (t in R^n, x in R^p) -> R^q with optional metadata."""

    arity_time: int
    arity_state: int
    body: tuple
    lipschitz_in_state: float | None = None
    sup_bound: float | None = None
    name: str = ""
    smooth: bool = True

    def __post_init__(self):
        if isinstance(self.body, Node):
            object.__setattr__(self, "body", (self.body,))
        else:
            object.__setattr__(self, "body", tuple(as_node(b) for b in self.body))
        if self.arity_time < 1:
            raise DimensionMismatch("arity_time must be >= 1")
        if self.arity_state < 0:
            raise DimensionMismatch("arity_state must be >= 0")
        if not self.body:
            raise DimensionMismatch("out_dim must be >= 1")
        for comp in self.body:
            if max_index(comp, "t") >= self.arity_time:
                raise DimensionMismatch(
                    f"expression uses t{max_index(comp, 't')} but arity_time={self.arity_time}")
            if max_index(comp, "x") >= self.arity_state:
                raise DimensionMismatch(
                    f"expression uses x{max_index(comp, 'x')} but arity_state={self.arity_state}")
        if self.lipschitz_in_state is not None and self.lipschitz_in_state < 0:
            raise ValueError("lipschitz_in_state must be nonnegative")
        if self.sup_bound is not None and self.sup_bound < 0:
            raise ValueError("sup_bound must be nonnegative")

    @property
    def out_dim(self) -> int:
        return len(self.body)

    # -- evaluation --------------------------------------------------------
    def evaluate(self, t, x=None) -> np.ndarray:
        """Vectorised evaluation; returns an array of shape ``(..., q)``."""
        t = np.asarray(t, dtype=float)
        if t.shape[-1:] != (self.arity_time,):
            raise DimensionMismatch(
                f"time argument has trailing size {t.shape[-1:]} but arity_time={self.arity_time}")
        if self.arity_state:
            if x is None:
                raise DimensionMismatch(f"state argument required (arity_state={self.arity_state})")
            x = np.asarray(x, dtype=float)
            if x.shape[-1:] != (self.arity_state,):
                raise DimensionMismatch(
                    f"state argument has trailing size {x.shape[-1:]} but arity_state={self.arity_state}")
            shape = np.broadcast_shapes(t.shape[:-1], x.shape[:-1])
            xs = [x[..., j] for j in range(self.arity_state)]
        else:
            if x is not None and np.asarray(x).size:
                x = np.asarray(x, dtype=float)
                if x.shape[-1:] not in ((0,),):
                    raise DimensionMismatch("function takes no state argument")
                shape = np.broadcast_shapes(t.shape[:-1], x.shape[:-1])
            else:
                shape = t.shape[:-1]
            xs = []
        if not np.all(np.isfinite(t)):
            raise SingularPoint("non-finite time argument")
        env = _Env([t[..., i] for i in range(self.arity_time)], xs)
        comps = []
        for comp in self.body:
            val = np.broadcast_to(np.asarray(_eval(comp, env), dtype=float), shape)
            comps.append(val)
        out = np.stack(comps, axis=-1)
        if not np.all(np.isfinite(out)):
            raise SingularPoint(f"non-finite value while evaluating {self.name or self.to_prefix()}")
        if self.sup_bound is not None:
            norms = np.linalg.norm(out, axis=-1) if self.out_dim > 1 else np.abs(out[..., 0])
            worst = float(np.max(norms)) if norms.size else 0.0
            if worst > self.sup_bound * (1 + 1e-9) + 1e-12:
                raise SupBoundViolation(
                    f"|F| = {worst:.6g} exceeds declared sup_bound {self.sup_bound:.6g}")
        return out

    def __call__(self, t, x=None) -> np.ndarray:
        return evaluate(self, t, x)

    # -- serialization -----------------------------------------------------
    def to_prefix(self) -> str:
        if self.out_dim == 1:
            return to_prefix(self.body[0])
        return "(vec " + " ".join(to_prefix(b) for b in self.body) + ")"

    @classmethod
    def parse(cls, text: str, arity_time: int | None = None, arity_state: int | None = None,
              **meta) -> "FunctionExpr":
        text = text.strip()
        tokens = _tokenize(text)
        if len(tokens) >= 2 and tokens[0] == "(" and tokens[1] == "vec":
            if tokens[-1] != ")":
                raise ParseError("missing ')' after vec")
            inner = tokens[2:-1]
            comps = []
            pos = 0
            while pos < len(inner):
                node, pos = _parse(inner, pos)
                comps.append(node)
            if not comps:
                raise ParseError("empty vec")
        else:
            comps = [parse_node(text)]
        if arity_time is None:
            arity_time = max(1, 1 + max(max_index(c, "t") for c in comps))
        if arity_state is None:
            arity_state = 1 + max(max_index(c, "x") for c in comps)
        return cls(arity_time, arity_state, tuple(comps), **meta)

    def with_meta(self, **changes) -> "FunctionExpr":
        return replace(self, **changes)


def evaluate(f: FunctionExpr, t, x=None) -> np.ndarray:
    """Evaluate ``f`` at a single point; returns a vector of length q."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if t.ndim != 1 or t.shape[0] != f.arity_time:
        raise DimensionMismatch(f"expected t in R^{f.arity_time}, got shape {t.shape}")
    if f.arity_state:
        if x is None:
            raise DimensionMismatch(f"expected x in R^{f.arity_state}")
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.ndim != 1 or x.shape[0] != f.arity_state:
            raise DimensionMismatch(f"expected x in R^{f.arity_state}, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise SingularPoint("non-finite state argument")
    elif x is not None and np.asarray(x).size:
        raise DimensionMismatch("function takes no state argument")
    else:
        x = None
    return f.evaluate(t, x)


def sample(f: FunctionExpr, points, states=None) -> np.ndarray:
    """Evaluate on every (point, state) pair: result shape ``(N, S, q)``."""
    points = np.asarray(points, dtype=float).reshape(-1, f.arity_time)
    if f.arity_state:
        states = np.asarray(states, dtype=float).reshape(-1, f.arity_state)
        return f.evaluate(points[:, None, :], states[None, :, :])
    return f.evaluate(points)[:, None, :]


# ---------------------------------------------------------------------------
# derived expressions

def scalar(node, name: str = "", arity_time: int | None = None, arity_state: int | None = None,
           **meta) -> FunctionExpr:
    node = as_node(node)
    n = arity_time if arity_time is not None else max(1, 1 + max_index(node, "t"))
    p = arity_state if arity_state is not None else 1 + max_index(node, "x")
    return FunctionExpr(n, p, (node,), name=name, **meta)


def shift(f: FunctionExpr, tau: Sequence[float]) -> FunctionExpr:
    """``t -> f(t + tau)`` as a new expression."""
    tau = np.asarray(tau, dtype=float).reshape(-1)
    if tau.shape[0] != f.arity_time:
        raise DimensionMismatch("shift vector has wrong dimension")
    t_map = [T(i) + float(tau[i]) if tau[i] != 0 else T(i) for i in range(f.arity_time)]
    body = tuple(substitute(b, t_map) for b in f.body)
    return replace(f, body=body, name=f"{f.name}[shifted]" if f.name else "")


def linear_combination(alpha: float, f: FunctionExpr, beta: float, g: FunctionExpr) -> FunctionExpr:
    if (f.arity_time, f.arity_state, f.out_dim) != (g.arity_time, g.arity_state, g.out_dim):
        raise DimensionMismatch("linear combination needs matching arities")
    body = tuple(add(mul(alpha, a), mul(beta, b)) for a, b in zip(f.body, g.body))
    sup = None
    if f.sup_bound is not None and g.sup_bound is not None:
        sup = abs(alpha) * f.sup_bound + abs(beta) * g.sup_bound
    lip = None
    if f.lipschitz_in_state is not None and g.lipschitz_in_state is not None:
        lip = abs(alpha) * f.lipschitz_in_state + abs(beta) * g.lipschitz_in_state
    return FunctionExpr(f.arity_time, f.arity_state, body, lipschitz_in_state=lip, sup_bound=sup,
                        name=f"{alpha:g}*{f.name or 'f'}+{beta:g}*{g.name or 'g'}")


def partial_difference(f: FunctionExpr, axis: int, h: float) -> FunctionExpr:
    """Central finite-difference approximation of the partial derivative."""
    if not 0 <= axis < f.arity_time:
        raise DimensionMismatch("axis out of range")
    plus = [T(i) + h if i == axis else T(i) for i in range(f.arity_time)]
    minus = [T(i) - h if i == axis else T(i) for i in range(f.arity_time)]
    body = tuple((substitute(b, plus) - substitute(b, minus)) / (2.0 * h) for b in f.body)
    return FunctionExpr(f.arity_time, f.arity_state, body,
                        name=f"d{axis}[{f.name or 'f'}]", smooth=f.smooth)


def laplacian_difference(f: FunctionExpr, h: float) -> FunctionExpr:
    """Second-order central-difference Laplacian over all time axes."""
    terms = []
    for b in f.body:
        pieces = []
        for axis in range(f.arity_time):
            plus = [T(i) + h if i == axis else T(i) for i in range(f.arity_time)]
            minus = [T(i) - h if i == axis else T(i) for i in range(f.arity_time)]
            pieces.append(substitute(b, plus) - 2.0 * b + substitute(b, minus))
        terms.append(add(*pieces) / (h * h))
    return FunctionExpr(f.arity_time, f.arity_state, tuple(terms), name=f"lap[{f.name or 'f'}]")


def kink_arguments(f: FunctionExpr) -> list[FunctionExpr]:
    """Scalar expressions whose sign changes mark kinks of ``f``.

    Collects the arguments of ``abs`` nodes and the pairwise differences
    of two-argument ``min``/``max`` nodes (outside ``integral`` nodes),
    skipping constant ones.
    """
    found: list[Node] = []

    def walk(node: Node):
        if node.op == "integral":
            return
        if node.op == "abs":
            found.append(node.args[0])
        elif node.op in ("min", "max") and len(node.args) == 2:
            found.append(Node("sub", (node.args[0], node.args[1])))
        for a in node.args:
            if isinstance(a, Node):
                walk(a)

    for comp in f.body:
        walk(comp)
    out = []
    for node in found:
        if max_index(node, "t") < 0 and max_index(node, "x") < 0:
            continue
        if node not in [o.body[0] for o in out]:
            out.append(FunctionExpr(f.arity_time, f.arity_state, (node,)))
    return out
