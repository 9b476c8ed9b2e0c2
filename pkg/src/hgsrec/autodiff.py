"""Dense 2-D tensors with taped reverse-mode differentiation.

Every value is a float64 matrix. Operations executed inside a ``with
Tape():`` block are appended to that tape; :func:`backward` replays the
recording once, in reverse, accumulating gradients into every tensor that
has ``requires_grad`` set. Outside a tape block the same operations run as
plain numpy forward passes, which is what inference uses.

The operation set is deliberately small: matrix product, elementwise
arithmetic, row concatenation, a handful of activations, reductions, and
two indexing helpers (``row`` for embedding lookup, ``element`` for
attention weights). Gradient formulas are written out per operation; there
is no graph optimisation of any kind.
"""
from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "ShapeError",
    "TapeError",
    "backward",
    "scalar",
    "matmul",
    "add",
    "sub",
    "neg",
    "mul",
    "scale",
    "scale_by",
    "dot",
    "div",
    "concat",
    "stack_scalars",
    "element",
    "row",
    "sum_all",
    "mean_all",
    "softmax",
    "sigmoid",
    "relu",
    "leaky_relu",
    "tanh",
    "softplus",
    "sign_guard",
]


class ShapeError(ValueError):
    """Operand shapes violate an operation's contract."""


class TapeError(RuntimeError):
    """Backward bookkeeping misuse: detached loss, non-scalar loss, reuse."""


_tape_stack: list["Tape"] = []


class Tape:
    """Ordered record of operations, consumed once by :func:`backward`."""

    __slots__ = ("_ops", "_used")

    def __init__(self) -> None:
        self._ops: list[tuple[Tensor, object]] = []
        self._used = False

    def __enter__(self) -> "Tape":
        _tape_stack.append(self)
        return self

    def __exit__(self, *exc) -> bool:
        _tape_stack.pop()
        return False

    def __len__(self) -> int:
        return len(self._ops)

    def _run_backward(self, loss: "Tensor") -> None:
        if self._used:
            raise TapeError(
                "this tape was already consumed by backward; "
                "rebuild the forward pass on a fresh tape"
            )
        self._used = True
        loss.grad = np.ones((1, 1))
        for out, backward_fn in reversed(self._ops):
            if out.grad is None:  # not on the path to the loss
                continue
            backward_fn(out.grad)


class Tensor:
    """A float64 matrix, optionally tracked for gradients.

    ``grad`` stays ``None`` until a backward pass deposits something; it is
    rebound on accumulation, never mutated in place, so aliasing between
    grad buffers is safe as long as callers treat them as read-only.
    """

    __slots__ = ("values", "requires_grad", "grad", "_tape")

    def __init__(self, values, requires_grad: bool = False) -> None:
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr.reshape(1, -1)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ShapeError(
                f"tensors are non-empty 2-D matrices, got shape {arr.shape}"
            )
        self.values = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._tape: Tape | None = None

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __neg__(self) -> "Tensor":
        return neg(self)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__


def _finish(out: Tensor, inputs: tuple[Tensor, ...], backward_fn) -> Tensor:
    """Attach grad tracking to a freshly computed output."""
    out.requires_grad = any(t.requires_grad for t in inputs)
    if out.requires_grad and _tape_stack:
        tape = _tape_stack[-1]
        out._tape = tape
        tape._ops.append((out, backward_fn))
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    if t.requires_grad:
        t.grad = g if t.grad is None else t.grad + g


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(tensor) into every tracked tensor on the tape."""
    if loss.shape != (1, 1):
        raise TapeError(f"backward needs a 1x1 loss, got shape {loss.shape}")
    if loss._tape is None:
        raise TapeError(
            "loss is detached: it was not produced by operations recorded "
            "on an active tape"
        )
    loss._tape._run_backward(loss)


def scalar(t: Tensor) -> float:
    """The single entry of a 1x1 tensor as a python float."""
    if t.shape != (1, 1):
        raise ShapeError(f"scalar() needs a 1x1 tensor, got shape {t.shape}")
    return float(t.values[0, 0])


# ---------------------------------------------------------------- arithmetic


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.cols != b.rows:
        raise ShapeError(f"matmul: inner dimensions disagree, {a.shape} @ {b.shape}")
    out = Tensor(a.values @ b.values)

    def bw(g: np.ndarray) -> None:
        _accum(a, g @ b.values.T)
        _accum(b, a.values.T @ g)

    return _finish(out, (a, b), bw)


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes disagree, {a.shape} vs {b.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("add", a, b)
    out = Tensor(a.values + b.values)

    def bw(g: np.ndarray) -> None:
        _accum(a, g)
        _accum(b, g)

    return _finish(out, (a, b), bw)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("sub", a, b)
    out = Tensor(a.values - b.values)

    def bw(g: np.ndarray) -> None:
        _accum(a, g)
        _accum(b, -g)

    return _finish(out, (a, b), bw)


def neg(a: Tensor) -> Tensor:
    return scale(a, -1.0)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product."""
    _same_shape("mul", a, b)
    out = Tensor(a.values * b.values)

    def bw(g: np.ndarray) -> None:
        _accum(a, g * b.values)
        _accum(b, g * a.values)

    return _finish(out, (a, b), bw)


def scale(a: Tensor, c: float) -> Tensor:
    """Product with a plain python constant."""
    c = float(c)
    out = Tensor(a.values * c)

    def bw(g: np.ndarray) -> None:
        _accum(a, g * c)

    return _finish(out, (a,), bw)


def scale_by(a: Tensor, s: Tensor) -> Tensor:
    """Product with a tracked 1x1 coefficient."""
    if s.shape != (1, 1):
        raise ShapeError(f"scale_by: coefficient must be 1x1, got {s.shape}")
    out = Tensor(a.values * s.values[0, 0])

    def bw(g: np.ndarray) -> None:
        _accum(a, g * s.values[0, 0])
        _accum(s, np.array([[float(np.sum(g * a.values))]]))

    return _finish(out, (a, s), bw)


def dot(a: Tensor, b: Tensor) -> Tensor:
    """Inner product of two row vectors of equal width, as a 1x1 tensor."""
    if a.rows != 1 or b.rows != 1 or a.cols != b.cols:
        raise ShapeError(f"dot: needs two equal-width row vectors, {a.shape} vs {b.shape}")
    out = Tensor([[float(a.values[0] @ b.values[0])]])

    def bw(g: np.ndarray) -> None:
        g00 = g[0, 0]
        _accum(a, g00 * b.values)
        _accum(b, g00 * a.values)

    return _finish(out, (a, b), bw)


def div(a: Tensor, s: Tensor) -> Tensor:
    """Elementwise division by a tracked 1x1 denominator."""
    if s.shape != (1, 1):
        raise ShapeError(f"div: denominator must be 1x1, got {s.shape}")
    d = s.values[0, 0]
    out = Tensor(a.values / d)

    def bw(g: np.ndarray) -> None:
        _accum(a, g / d)
        _accum(s, np.array([[float(np.sum(g * a.values)) * (-1.0 / (d * d))]]))

    return _finish(out, (a, s), bw)


# ------------------------------------------------------------- row stitching


def concat(a: Tensor, b: Tensor) -> Tensor:
    """Concatenate two row vectors side by side."""
    if a.rows != 1 or b.rows != 1:
        raise ShapeError(f"concat: needs row vectors, got {a.shape} and {b.shape}")
    out = Tensor(np.concatenate([a.values, b.values], axis=1))
    p = a.cols

    def bw(g: np.ndarray) -> None:
        _accum(a, g[:, :p])
        _accum(b, g[:, p:])

    return _finish(out, (a, b), bw)


def stack_scalars(parts: list[Tensor]) -> Tensor:
    """Stitch 1x1 tensors into one row vector."""
    if not parts:
        raise ShapeError("stack_scalars: needs at least one part")
    for p in parts:
        if p.shape != (1, 1):
            raise ShapeError(f"stack_scalars: parts must be 1x1, got {p.shape}")
    out = Tensor(np.array([[p.values[0, 0] for p in parts]]))

    def bw(g: np.ndarray) -> None:
        for j, p in enumerate(parts):
            _accum(p, g[:, j : j + 1])

    return _finish(out, tuple(parts), bw)


def element(v: Tensor, index: int) -> Tensor:
    """Pick one entry of a row vector as a 1x1 tensor."""
    if v.rows != 1:
        raise ShapeError(f"element: needs a row vector, got {v.shape}")
    if not 0 <= index < v.cols:
        raise ShapeError(f"element: index {index} out of range for width {v.cols}")
    out = Tensor([[v.values[0, index]]])

    def bw(g: np.ndarray) -> None:
        full = np.zeros_like(v.values)
        full[0, index] = g[0, 0]
        _accum(v, full)

    return _finish(out, (v,), bw)


def row(w: Tensor, index: int, sign: float = 1.0) -> Tensor:
    """One row of a matrix, optionally negated; the one-hot product shortcut."""
    if not 0 <= index < w.rows:
        raise ShapeError(f"row: index {index} out of range for {w.shape}")
    sign = float(sign)
    out = Tensor(w.values[index : index + 1] * sign)

    def bw(g: np.ndarray) -> None:
        full = np.zeros_like(w.values)
        full[index] = g[0] * sign
        _accum(w, full)

    return _finish(out, (w,), bw)


# ---------------------------------------------------------------- reductions


def sum_all(a: Tensor) -> Tensor:
    out = Tensor([[float(np.sum(a.values))]])

    def bw(g: np.ndarray) -> None:
        _accum(a, np.full_like(a.values, g[0, 0]))

    return _finish(out, (a,), bw)


def mean_all(a: Tensor) -> Tensor:
    n = a.values.size
    out = Tensor([[float(np.sum(a.values)) / n]])

    def bw(g: np.ndarray) -> None:
        _accum(a, np.full_like(a.values, g[0, 0] / n))

    return _finish(out, (a,), bw)


# --------------------------------------------------------------- activations


def softmax(v: Tensor) -> Tensor:
    """Row-vector softmax, computed with max subtraction."""
    if v.rows != 1:
        raise ShapeError(f"softmax: needs a row vector, got {v.shape}")
    shifted = v.values - np.max(v.values)
    e = np.exp(shifted)
    s = e / np.sum(e)
    out = Tensor(s)

    def bw(g: np.ndarray) -> None:
        _accum(v, s * (g - float(np.sum(g * s))))

    return _finish(out, (v,), bw)


def sigmoid(x: Tensor) -> Tensor:
    v = x.values
    s = np.where(v >= 0, 1.0 / (1.0 + np.exp(-np.abs(v))), np.exp(-np.abs(v)) / (1.0 + np.exp(-np.abs(v))))
    out = Tensor(s)

    def bw(g: np.ndarray) -> None:
        _accum(x, g * s * (1.0 - s))

    return _finish(out, (x,), bw)


def relu(x: Tensor) -> Tensor:
    mask = x.values > 0
    out = Tensor(np.where(mask, x.values, 0.0))

    def bw(g: np.ndarray) -> None:
        _accum(x, g * mask)

    return _finish(out, (x,), bw)


def leaky_relu(x: Tensor, slope: float = 0.01) -> Tensor:
    slope = float(slope)
    mask = x.values >= 0
    out = Tensor(np.where(mask, x.values, slope * x.values))

    def bw(g: np.ndarray) -> None:
        _accum(x, g * np.where(mask, 1.0, slope))

    return _finish(out, (x,), bw)


def tanh(x: Tensor) -> Tensor:
    t = np.tanh(x.values)
    out = Tensor(t)

    def bw(g: np.ndarray) -> None:
        _accum(x, g * (1.0 - t * t))

    return _finish(out, (x,), bw)


def softplus(x: Tensor) -> Tensor:
    """log(1 + exp(x)) in the overflow-safe split form."""
    v = x.values
    out = Tensor(np.maximum(v, 0.0) + np.log1p(np.exp(-np.abs(v))))
    sig = np.where(v >= 0, 1.0 / (1.0 + np.exp(-np.abs(v))), np.exp(-np.abs(v)) / (1.0 + np.exp(-np.abs(v))))

    def bw(g: np.ndarray) -> None:
        _accum(x, g * sig)

    return _finish(out, (x,), bw)


def sign_guard(x: Tensor, eps: float) -> Tensor:
    """Clamp a 1x1 value away from zero, keeping its sign (zero counts as +).

    Gradient passes through unchanged where no clamping happened and is cut
    where it did, matching the piecewise-constant clamp.
    """
    if x.shape != (1, 1):
        raise ShapeError(f"sign_guard: needs a 1x1 tensor, got {x.shape}")
    eps = float(eps)
    if eps <= 0:
        raise ValueError("sign_guard: eps must be positive")
    v = x.values[0, 0]
    guarded = abs(v) >= eps
    if guarded:
        out = Tensor([[v]])
    else:
        out = Tensor([[eps if v >= 0 else -eps]])

    def bw(g: np.ndarray) -> None:
        if guarded:
            _accum(x, g)

    return _finish(out, (x,), bw)
