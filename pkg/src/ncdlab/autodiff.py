"""Tape-based reverse-mode automatic differentiation over dense float64 matrices.

Every node on a :class:`Tape` holds a 2-D ``numpy`` array.  Nodes are appended
in creation order, which is already a topological order (parents always exist
before their children), so the backward sweep simply walks the tape in
reverse.

Primitives live in :data:`PRIMITIVES` as ``(forward, vjp)`` pairs.  ``vjp``
receives the upstream gradient, the parent values, the output value and any
static keyword arguments, and returns one gradient per parent.  Keeping them
in a registry lets the gradient checker iterate over every primitive and lets
tests inject a broken rule.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

LOG_EPS = 1e-12
FD_STEP = 1e-5


class ShapeError(ValueError):
    pass


class GradCheckError(ArithmeticError):
    """Raised when a finite-difference probe evaluates to a non-finite value."""

    def __init__(self, message: str, index: tuple[int, ...]):
        super().__init__(message)
        self.index = index


@dataclass(frozen=True)
class Primitive:
    name: str
    forward: Callable[..., np.ndarray]
    vjp: Callable[..., tuple[np.ndarray, ...]]


PRIMITIVES: dict[str, Primitive] = {}


def register(name, forward, vjp):
    PRIMITIVES[name] = Primitive(name, forward, vjp)


def _as_matrix(x) -> np.ndarray:
    a = np.array(x, dtype=np.float64)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(-1, 1)
    elif a.ndim != 2:
        raise ShapeError(f"expected a matrix, got array with shape {a.shape}")
    return a


@dataclass
class _Node:
    op: str | None
    value: np.ndarray
    parents: tuple[int, ...]
    kwargs: dict = field(default_factory=dict)


class Tape:
    """Records matrix operations so gradients can be pulled back from a scalar."""

    def __init__(self):
        self.nodes: list[_Node] = []

    def __len__(self):
        return len(self.nodes)

    def leaf(self, value) -> Var:
        """Register a differentiable input."""
        value = _as_matrix(value)
        value.setflags(write=False)
        self.nodes.append(_Node(None, value, ()))
        return Var(self, len(self.nodes) - 1)

    # constants are leaves whose gradient nobody asks for
    constant = leaf

    def apply(self, name: str, *args: Var, **kwargs) -> Var:
        prim = PRIMITIVES[name]
        for a in args:
            if a.tape is not self:
                raise ValueError("cannot mix values from different tapes")
        value = prim.forward(*(a.value for a in args), **kwargs)
        value = np.asarray(value, dtype=np.float64)
        value.setflags(write=False)
        self.nodes.append(_Node(name, value, tuple(a.index for a in args), kwargs))
        return Var(self, len(self.nodes) - 1)

    def backward(self, output: Var) -> list[np.ndarray | None]:
        """Gradients of the scalar ``output`` with respect to every node.

        Nodes with no path to ``output`` get a zero array, never ``None``.
        """
        if output.shape != (1, 1):
            raise ShapeError(f"backward needs a 1x1 output, got {output.shape}")
        grads: list[np.ndarray | None] = [None] * len(self.nodes)
        grads[output.index] = np.ones((1, 1))
        for i in range(output.index, -1, -1):
            node = self.nodes[i]
            g = grads[i]
            if g is None or node.op is None:
                continue
            parent_vals = [self.nodes[p].value for p in node.parents]
            pulled = PRIMITIVES[node.op].vjp(g, *parent_vals, out=node.value, **node.kwargs)
            for p, pg in zip(node.parents, pulled):
                pg = np.asarray(pg, dtype=np.float64)
                if pg.shape != self.nodes[p].value.shape:
                    raise ShapeError(
                        f"{node.op}: gradient shape {pg.shape} does not match "
                        f"parent shape {self.nodes[p].value.shape}"
                    )
                grads[p] = pg if grads[p] is None else grads[p] + pg
        return [
            np.zeros_like(n.value) if g is None else g for n, g in zip(self.nodes, grads)
        ]


class Var:
    """Handle to one node of a tape."""

    __slots__ = ("tape", "index")

    def __init__(self, tape: Tape, index: int):
        self.tape = tape
        self.index = index

    @property
    def value(self) -> np.ndarray:
        return self.tape.nodes[self.index].value

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def item(self) -> float:
        return float(self.value[0, 0])

    def __matmul__(self, other):
        return matmul(self, other)

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return subtract(self, other)

    def __mul__(self, other):
        if isinstance(other, Var):
            return hadamard(self, other)
        return scale(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    @property
    def T(self):
        return transpose(self)

    def __repr__(self):
        return f"Var(index={self.index}, shape={self.shape})"


def _check_same(name, a, b):
    if a.shape != b.shape:
        raise ShapeError(f"{name}: shapes {a.shape} and {b.shape} differ")


# ---------------------------------------------------------------------------
# primitive rules


def _matmul_fwd(a, b):
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    return a @ b


register("matmul", _matmul_fwd, lambda g, a, b, out: (g @ b.T, a.T @ g))


def _add_fwd(a, b):
    _check_same("add", a, b)
    return a + b


register("add", _add_fwd, lambda g, a, b, out: (g, g))


def _sub_fwd(a, b):
    _check_same("subtract", a, b)
    return a - b


register("subtract", _sub_fwd, lambda g, a, b, out: (g, -g))


def _hadamard_fwd(a, b):
    _check_same("hadamard", a, b)
    return a * b


register("hadamard", _hadamard_fwd, lambda g, a, b, out: (g * b, g * a))
register("scale", lambda a, c: a * c, lambda g, a, out, c: (g * c,))
register("transpose", lambda a: a.T.copy(), lambda g, a, out: (g.T,))
register("sum", lambda a: np.array([[a.sum()]]), lambda g, a, out: (np.full_like(a, g[0, 0]),))
register(
    "mean_columns",
    lambda a: a.mean(axis=1, keepdims=True),
    lambda g, a, out: (np.repeat(g, a.shape[1], axis=1) / a.shape[1],),
)


def _trace_fwd(a):
    if a.shape[0] != a.shape[1]:
        raise ShapeError(f"trace: matrix {a.shape} is not square")
    return np.array([[np.trace(a)]])


register("trace", _trace_fwd, lambda g, a, out: (g[0, 0] * np.eye(a.shape[0]),))


def _log_fwd(a, eps):
    return np.log(np.maximum(a, eps))


def _log_vjp(g, a, out, eps):
    # clamped region is flat
    return (np.where(a > eps, g / np.maximum(a, eps), 0.0),)


register("log", _log_fwd, _log_vjp)
register("relu", lambda a: np.maximum(a, 0.0), lambda g, a, out: (g * (a > 0),))


def _frob_fwd(a, delta):
    return np.array([[np.sqrt(np.sum(a * a) + delta * delta)]])


def _frob_vjp(g, a, out, delta):
    n = out[0, 0]
    if n == 0.0:
        return (np.zeros_like(a),)
    return (g[0, 0] * a / n,)


register("frobenius_norm", _frob_fwd, _frob_vjp)


def _bcast_fwd(a, cols):
    if a.shape[1] != 1:
        raise ShapeError(f"broadcast_column: expected a column vector, got {a.shape}")
    return np.repeat(a, cols, axis=1)


register("broadcast_column", _bcast_fwd, lambda g, a, out, cols: (g.sum(axis=1, keepdims=True),))


def _softmax_fwd(z):
    shifted = z - z.max(axis=0, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=0, keepdims=True)


def _softmax_vjp(g, z, out):
    return (out * (g - np.sum(g * out, axis=0, keepdims=True)),)


register("softmax_columns", _softmax_fwd, _softmax_vjp)


def _concat_fwd(a, b):
    if a.shape[0] != b.shape[0]:
        raise ShapeError(f"concat_columns: row counts {a.shape[0]} and {b.shape[0]} differ")
    return np.concatenate([a, b], axis=1)


def _concat_vjp(g, a, b, out):
    k = a.shape[1]
    return g[:, :k], g[:, k:]


register("concat_columns", _concat_fwd, _concat_vjp)


def _cols_fwd(a, start, stop):
    if not 0 <= start < stop <= a.shape[1]:
        raise ShapeError(f"columns: slice [{start}:{stop}] out of range for {a.shape}")
    return a[:, start:stop].copy()


def _cols_vjp(g, a, out, start, stop):
    full = np.zeros_like(a)
    full[:, start:stop] = g
    return (full,)


register("columns", _cols_fwd, _cols_vjp)


# ---------------------------------------------------------------------------
# public op functions


def matmul(a: Var, b: Var) -> Var:
    return a.tape.apply("matmul", a, b)


def add(a: Var, b: Var) -> Var:
    return a.tape.apply("add", a, b)


def subtract(a: Var, b: Var) -> Var:
    return a.tape.apply("subtract", a, b)


def hadamard(a: Var, b: Var) -> Var:
    return a.tape.apply("hadamard", a, b)


def scale(a: Var, c: float) -> Var:
    return a.tape.apply("scale", a, c=float(c))


def transpose(a: Var) -> Var:
    return a.tape.apply("transpose", a)


def sum_all(a: Var) -> Var:
    return a.tape.apply("sum", a)


def mean_columns(a: Var) -> Var:
    """Row-wise average over columns; K x B -> K x 1."""
    return a.tape.apply("mean_columns", a)


def trace(a: Var) -> Var:
    return a.tape.apply("trace", a)


def log(a: Var, eps: float = LOG_EPS) -> Var:
    return a.tape.apply("log", a, eps=eps)


def relu(a: Var) -> Var:
    return a.tape.apply("relu", a)


def frobenius_norm(a: Var, delta: float = 0.0) -> Var:
    """sqrt(tr(A^T A) + delta^2); ``delta > 0`` smooths the kink at zero."""
    return a.tape.apply("frobenius_norm", a, delta=float(delta))


def broadcast_column(a: Var, cols: int) -> Var:
    return a.tape.apply("broadcast_column", a, cols=int(cols))


def softmax_columns(z: Var) -> Var:
    return z.tape.apply("softmax_columns", z)


def concat_columns(a: Var, b: Var) -> Var:
    return a.tape.apply("concat_columns", a, b)


def columns(a: Var, start: int, stop: int) -> Var:
    return a.tape.apply("columns", a, start=int(start), stop=int(stop))


def as_var(x, tape: Tape | None = None) -> Var:
    """Pass a Var through; wrap anything else as a constant on ``tape``."""
    if isinstance(x, Var):
        return x
    return (tape or Tape()).constant(x)


# ---------------------------------------------------------------------------
# finite-difference oracle


def numerical_gradient(f: Callable[[Var], Var], at, step: float = FD_STEP) -> np.ndarray:
    """Central-difference gradient of the scalar graph function ``f`` at ``at``."""
    at = _as_matrix(at)
    grad = np.zeros_like(at)

    def evaluate(x, idx):
        v = f(Tape().leaf(x)).item()
        if not np.isfinite(v):
            raise GradCheckError(f"non-finite evaluation {v} while probing entry {idx}", idx)
        return v

    for idx in np.ndindex(*at.shape):
        x = at.copy()
        x[idx] = at[idx] + step
        fp = evaluate(x, idx)
        x[idx] = at[idx] - step
        fm = evaluate(x, idx)
        grad[idx] = (fp - fm) / (2 * step)
    return grad


def analytic_gradient(f: Callable[[Var], Var], at) -> np.ndarray:
    tape = Tape()
    x = tape.leaf(at)
    out = f(x)
    if not np.isfinite(out.item()):
        raise GradCheckError(f"non-finite evaluation {out.item()} at the base point", ())
    return tape.backward(out)[x.index]


def grad_check(f: Callable[[Var], Var], at, step: float = FD_STEP) -> float:
    """Max over entries of ``|analytic - numeric| / max(1, |analytic|)``."""
    a = analytic_gradient(f, at)
    n = numerical_gradient(f, at, step)
    return float(np.max(np.abs(a - n) / np.maximum(1.0, np.abs(a))))


def global_norm(grads: Sequence[np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))
