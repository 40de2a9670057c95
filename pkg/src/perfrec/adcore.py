"""Dense-matrix reverse-mode automatic differentiation.

Every value on a :class:`Tape` is a 2-D float64 array. Nodes are appended in
topological order, so the backward pass is a single reverse sweep.

    >>> tape = Tape()
    >>> x = tape.leaf(np.array([[1.0, 2.0]]))
    >>> y = tape.op("total_sum", x * x)
    >>> tape.backward(y)[x.id]
    array([[2., 4.]])
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "ShapeError",
    "NonFiniteError",
    "Node",
    "Tape",
    "GradCheckReport",
    "grad_check",
    "OP_KINDS",
    "CORE_OPS",
]

_LN2 = np.log(2.0)
EXP2_MAX_EXPONENT = 60.0


class ShapeError(ValueError):
    """Raised when operand shapes do not conform to an op's rule."""


class NonFiniteError(FloatingPointError):
    """Raised when an op produces NaN or infinite values."""


# --------------------------------------------------------------------------
# shape rules


def _elementwise_shape(kind, a, b):
    if a == b:
        return a
    if a[0] == 1 and a[1] == b[1]:
        return b
    if b[0] == 1 and a[1] == b[1]:
        return a
    raise ShapeError(f"{kind}: incompatible shapes {a} and {b} (only 1xc row-broadcast is allowed)")


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    return g.sum(axis=0, keepdims=True)


# --------------------------------------------------------------------------
# op implementations: forward(values, params) and backward(g, values, out, params)


def _matmul_fwd(v, p):
    a, b = v
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    return a @ b


def _matmul_bwd(g, v, out, p):
    a, b = v
    return g @ b.T, a.T @ g


def _add_fwd(v, p):
    _elementwise_shape("add", v[0].shape, v[1].shape)
    return v[0] + v[1]


def _add_bwd(g, v, out, p):
    return _unbroadcast(g, v[0].shape), _unbroadcast(g, v[1].shape)


def _sub_fwd(v, p):
    _elementwise_shape("sub", v[0].shape, v[1].shape)
    return v[0] - v[1]


def _sub_bwd(g, v, out, p):
    return _unbroadcast(g, v[0].shape), -_unbroadcast(g, v[1].shape)


def _mul_fwd(v, p):
    _elementwise_shape("mul", v[0].shape, v[1].shape)
    return v[0] * v[1]


def _mul_bwd(g, v, out, p):
    a, b = v
    return _unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)


def _div_fwd(v, p):
    _elementwise_shape("div", v[0].shape, v[1].shape)
    return v[0] / v[1]


def _div_bwd(g, v, out, p):
    a, b = v
    return _unbroadcast(g / b, a.shape), _unbroadcast(-g * a / (b * b), b.shape)


def _scalar_mul_fwd(v, p):
    return p["c"] * v[0]


def _scalar_mul_bwd(g, v, out, p):
    return (p["c"] * g,)


def _transpose_fwd(v, p):
    return v[0].T.copy()


def _transpose_bwd(g, v, out, p):
    return (g.T,)


def _row_sum_fwd(v, p):
    return v[0].sum(axis=1, keepdims=True)


def _row_sum_bwd(g, v, out, p):
    return (np.broadcast_to(g, v[0].shape).copy(),)


def _total_sum_fwd(v, p):
    return np.array([[v[0].sum()]])


def _total_sum_bwd(g, v, out, p):
    return (np.full(v[0].shape, g[0, 0]),)


def _sigmoid_fwd(v, p):
    return 0.5 * (1.0 + np.tanh(0.5 * v[0] / p["tau"]))


def _sigmoid_bwd(g, v, out, p):
    return (g * out * (1.0 - out) / p["tau"],)


def _row_softmax_fwd(v, p):
    z = v[0] - v[0].max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _row_softmax_bwd(g, v, out, p):
    return (out * (g - (g * out).sum(axis=1, keepdims=True)),)


def _row_l2_normalize_fwd(v, p):
    norms = np.sqrt((v[0] * v[0]).sum(axis=1, keepdims=True))
    with np.errstate(divide="ignore", invalid="ignore"):
        return v[0] / norms


def _row_l2_normalize_bwd(g, v, out, p):
    norms = np.sqrt((v[0] * v[0]).sum(axis=1, keepdims=True))
    return ((g - out * (g * out).sum(axis=1, keepdims=True)) / norms,)


def _abs_fwd(v, p):
    return np.abs(v[0])


def _abs_bwd(g, v, out, p):
    # np.sign(0) == 0: derivative at the kink is defined as 0
    return (g * np.sign(v[0]),)


def _exp2_fwd(v, p):
    if v[0].size and v[0].max() > EXP2_MAX_EXPONENT:
        raise NonFiniteError(f"exp2: exponent {v[0].max():.3g} exceeds clamp {EXP2_MAX_EXPONENT}")
    return np.exp2(v[0])


def _exp2_bwd(g, v, out, p):
    return (g * out * _LN2,)


def _log2_1p_fwd(v, p):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.log1p(v[0]) / _LN2


def _log2_1p_bwd(g, v, out, p):
    return (g / ((1.0 + v[0]) * _LN2),)


def _broadcast_row_fwd(v, p):
    if v[0].shape[0] != 1:
        raise ShapeError(f"broadcast_row: expected a 1xc input, got {v[0].shape}")
    return np.repeat(v[0], p["rows"], axis=0)


def _broadcast_row_bwd(g, v, out, p):
    return (g.sum(axis=0, keepdims=True),)


def _reshape_fwd(v, p):
    shape = p["shape"]
    if shape[0] * shape[1] != v[0].size:
        raise ShapeError(f"reshape: cannot reshape {v[0].shape} to {shape}")
    return v[0].reshape(shape)


def _reshape_bwd(g, v, out, p):
    return (g.reshape(v[0].shape),)


def _repeat_rows_fwd(v, p):
    return np.repeat(v[0], p["times"], axis=0)


def _repeat_rows_bwd(g, v, out, p):
    r, c = v[0].shape
    return (g.reshape(r, p["times"], c).sum(axis=1),)


def _block_sum_fwd(v, p):
    rows, c = v[0].shape
    size = p["size"]
    if rows % size:
        raise ShapeError(f"block_sum: {rows} rows do not split into blocks of {size}")
    return v[0].reshape(rows // size, size, c).sum(axis=1)


def _block_sum_bwd(g, v, out, p):
    return (np.repeat(g, p["size"], axis=0),)


_OPS: dict[str, tuple[Callable, Callable, int]] = {
    "matmul": (_matmul_fwd, _matmul_bwd, 2),
    "add": (_add_fwd, _add_bwd, 2),
    "sub": (_sub_fwd, _sub_bwd, 2),
    "mul": (_mul_fwd, _mul_bwd, 2),
    "div": (_div_fwd, _div_bwd, 2),
    "scalar_mul": (_scalar_mul_fwd, _scalar_mul_bwd, 1),
    "transpose": (_transpose_fwd, _transpose_bwd, 1),
    "row_sum": (_row_sum_fwd, _row_sum_bwd, 1),
    "total_sum": (_total_sum_fwd, _total_sum_bwd, 1),
    "sigmoid": (_sigmoid_fwd, _sigmoid_bwd, 1),
    "row_softmax": (_row_softmax_fwd, _row_softmax_bwd, 1),
    "row_l2_normalize": (_row_l2_normalize_fwd, _row_l2_normalize_bwd, 1),
    "abs": (_abs_fwd, _abs_bwd, 1),
    "exp2": (_exp2_fwd, _exp2_bwd, 1),
    "log2_1p": (_log2_1p_fwd, _log2_1p_bwd, 1),
    "broadcast_row": (_broadcast_row_fwd, _broadcast_row_bwd, 1),
    "reshape": (_reshape_fwd, _reshape_bwd, 1),
    "repeat_rows": (_repeat_rows_fwd, _repeat_rows_bwd, 1),
    "block_sum": (_block_sum_fwd, _block_sum_bwd, 1),
}

_ALIASES = {
    "elementwise_mul": "mul",
    "hadamard": "mul",
    "sigmoid_with_temperature": "sigmoid",
    "absolute_value": "abs",
    "log2_of_1_plus": "log2_1p",
}

CORE_OPS = tuple(_OPS)
OP_KINDS = CORE_OPS + tuple(_ALIASES)


def _canonical(kind: str) -> str:
    kind = kind.replace("-", "_")
    kind = _ALIASES.get(kind, kind)
    if kind not in _OPS:
        raise KeyError(f"unknown op kind {kind!r}")
    return kind


# --------------------------------------------------------------------------


class Node:
    """Handle to a value recorded on a tape."""

    __slots__ = ("tape", "id")

    def __init__(self, tape: "Tape", id: int):
        self.tape = tape
        self.id = id

    @property
    def value(self) -> np.ndarray:
        return self.tape.values[self.id]

    @property
    def shape(self) -> tuple[int, int]:
        return self.tape.values[self.id].shape

    @property
    def grad(self) -> np.ndarray | None:
        return self.tape.grads.get(self.id)

    @property
    def T(self) -> "Node":
        return self.tape.op("transpose", self)

    def _lift(self, other):
        if isinstance(other, Node):
            return other
        return self.tape.const(np.full(self.shape, float(other)))

    def __add__(self, other):
        return self.tape.op("add", self, self._lift(other))

    __radd__ = __add__

    def __sub__(self, other):
        return self.tape.op("sub", self, self._lift(other))

    def __rsub__(self, other):
        return self.tape.op("sub", self._lift(other), self)

    def __mul__(self, other):
        if isinstance(other, Node):
            return self.tape.op("mul", self, other)
        return self.tape.op("scalar_mul", self, c=float(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Node):
            return self.tape.op("div", self, other)
        return self.tape.op("scalar_mul", self, c=1.0 / float(other))

    def __neg__(self):
        return self.tape.op("scalar_mul", self, c=-1.0)

    def __matmul__(self, other):
        return self.tape.op("matmul", self, other)

    def __repr__(self):
        return f"Node(id={self.id}, kind={self.tape.kinds[self.id]}, shape={self.shape})"


class Tape:
    """Append-only expression graph. Not thread-safe; use one tape per thread."""

    def __init__(self):
        self.kinds: list[str] = []
        self.inputs: list[tuple[int, ...]] = []
        self.values: list[np.ndarray] = []
        self.params: list[dict] = []
        self.needs_grad: list[bool] = []
        self.grads: dict[int, np.ndarray] = {}
        # sign patterns seen by abs ops, used by grad_check to skip kinks
        self.abs_signs: list[np.ndarray] = []

    def __len__(self):
        return len(self.values)

    def _push(self, kind, inputs, value, params, needs_grad) -> Node:
        self.kinds.append(kind)
        self.inputs.append(inputs)
        self.values.append(value)
        self.params.append(params)
        self.needs_grad.append(needs_grad)
        return Node(self, len(self.values) - 1)

    def leaf(self, value, requires_grad: bool = True) -> Node:
        arr = np.array(value, dtype=np.float64, ndmin=2)
        if arr.ndim != 2:
            raise ShapeError(f"leaf values must be 2-D, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise NonFiniteError("leaf: non-finite input value")
        return self._push("leaf", (), arr, {}, requires_grad)

    def const(self, value) -> Node:
        return self.leaf(value, requires_grad=False)

    def op(self, kind: str, *inputs: Node, **params) -> Node:
        """Record ``kind`` applied to ``inputs`` and return the result node."""
        kind = _canonical(kind)
        fwd, _, arity = _OPS[kind]
        if len(inputs) != arity:
            raise ShapeError(f"{kind}: expected {arity} inputs, got {len(inputs)}")
        for node in inputs:
            if node.tape is not self:
                raise ValueError(f"{kind}: input node belongs to another tape")
        vals = [self.values[n.id] for n in inputs]
        if kind == "sigmoid" and not params.get("tau", 0) > 0:
            raise ValueError("sigmoid: temperature tau must be positive")
        out = fwd(vals, params)
        if not np.isfinite(out).all():
            raise NonFiniteError(f"{kind}: produced non-finite values")
        if kind == "abs":
            self.abs_signs.append(np.sign(vals[0]))
        needs = any(self.needs_grad[n.id] for n in inputs)
        return self._push(kind, tuple(n.id for n in inputs), out, params, needs)

    def backward(self, root: Node) -> dict[int, np.ndarray]:
        """Reverse sweep from a 1x1 root; returns adjoints of gradient-requiring leaves."""
        if root.shape != (1, 1):
            raise ShapeError(f"backward: root must be 1x1, got {root.shape}")
        self.grads = {}
        adj: dict[int, np.ndarray] = {root.id: np.ones((1, 1))}
        for i in range(root.id, -1, -1):
            g = adj.pop(i, None)
            if g is None or not self.needs_grad[i]:
                continue
            kind = self.kinds[i]
            if kind == "leaf":
                self.grads[i] = g
                continue
            ins = self.inputs[i]
            vals = [self.values[j] for j in ins]
            if kind == "matmul":
                # skip the (often large) adjoint of a constant operand
                a, b = vals
                parts = (
                    g @ b.T if self.needs_grad[ins[0]] else None,
                    a.T @ g if self.needs_grad[ins[1]] else None,
                )
            else:
                parts = _OPS[kind][1](g, vals, self.values[i], self.params[i])
            for j, gj in zip(ins, parts):
                if not self.needs_grad[j]:
                    continue
                if j in adj:
                    adj[j] = adj[j] + gj
                else:
                    adj[j] = gj
        return dict(self.grads)


# --------------------------------------------------------------------------


@dataclass
class GradCheckReport:
    max_rel_error: float
    passed: bool
    excluded: tuple[int, ...] = ()
    analytic: np.ndarray = field(default=None, repr=False)
    numeric: np.ndarray = field(default=None, repr=False)


def _evaluate(builder, point):
    tape = Tape()
    x = tape.leaf(point)
    out = builder(tape, x)
    return tape, x, out


def grad_check(
    builder: Callable[[Tape, Node], Node],
    point,
    step: float = 1e-6,
    tolerance: float = 1e-4,
) -> GradCheckReport:
    """Compare backward gradients of ``builder`` against central differences.

    ``builder(tape, x)`` must return a 1x1 node. Coordinates whose +/- step
    evaluations land on different sides of an ``abs`` kink are excluded from the
    error and listed in ``excluded``; arguments that stay exactly zero are
    treated as constant.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    point = np.array(point, dtype=np.float64, ndmin=2)
    tape, x, out = _evaluate(builder, point)
    analytic = tape.backward(out).get(x.id, np.zeros_like(point))

    numeric = np.zeros_like(point)
    excluded = []
    rel = np.zeros_like(point)
    for idx in np.ndindex(point.shape):
        xp = point.copy()
        xp[idx] += step
        xm = point.copy()
        xm[idx] -= step
        tp, _, fp = _evaluate(builder, xp)
        tm, _, fm = _evaluate(builder, xm)
        numeric[idx] = (fp.value[0, 0] - fm.value[0, 0]) / (2 * step)
        # entries that are zero in both runs (e.g. |s - s|) are not kinks
        crosses = any((a != b).any() for a, b in zip(tp.abs_signs, tm.abs_signs))
        flat = int(np.ravel_multi_index(idx, point.shape))
        if crosses:
            excluded.append(flat)
            continue
        a, n = analytic[idx], numeric[idx]
        rel[idx] = abs(a - n) / max(abs(a), abs(n), 1e-8)
    max_rel = float(rel.max()) if rel.size else 0.0
    return GradCheckReport(max_rel, max_rel <= tolerance, tuple(excluded), analytic, numeric)
