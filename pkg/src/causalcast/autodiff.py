"""Reverse-mode automatic differentiation over dense 2-D float64 arrays.

Matrices are plain numpy arrays (row-major, C order); a ``Tensor`` wraps one
array together with the tape bookkeeping needed for reverse-mode gradients.
Scalars are 1x1 tensors, vectors are 1xK row tensors.  The operation set is
fixed: matmul, add/sub/mul, elementwise tanh/sigmoid/exp/log, clamp, softmax,
complex modulus (for spectra), plus shape plumbing (transpose, reshape,
slicing, concatenation, time/token stacking, reductions).

Every operation here carries an exact analytic gradient; ``grad_check``
compares those gradients against central finite differences.  Tapes are
per-evaluation and never shared, so concurrent graph builds over different
outputs are safe.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from .errors import EvaluationError, ShapeError

__all__ = [
    "Tensor",
    "as_tensor",
    "add",
    "mul",
    "matmul",
    "tanh",
    "sigmoid",
    "exp",
    "log",
    "clamp",
    "complex_abs",
    "softmax",
    "softmax_rows",
    "transpose",
    "reshape",
    "slice_rows",
    "slice_cols",
    "concat_rows",
    "concat_cols",
    "stack_channel_rows",
    "stack_token_rows",
    "sum_all",
    "mean_rows",
    "dft",
    "grad_check",
]


def _as_array(value) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise ShapeError(f"tensors are at most 2-D, got ndim={arr.ndim}")
    return arr


class Tensor:
    """A 2-D float64 array plus reverse-mode tape bookkeeping."""

    __slots__ = ("value", "grad", "needs_grad", "_parents", "_backward")

    def __init__(self, value, needs_grad: bool = False, _parents=(), _backward=None):
        self.value = _as_array(value)
        self.grad: np.ndarray | None = None
        self.needs_grad = needs_grad
        self._parents = _parents
        self._backward = _backward

    @property
    def rows(self) -> int:
        return self.value.shape[0]

    @property
    def cols(self) -> int:
        return self.value.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def item(self) -> float:
        if self.value.size != 1:
            raise ShapeError(f"item() needs a scalar tensor, got shape {self.shape}")
        return float(self.value[0, 0])

    def backward(self) -> None:
        """Accumulate gradients of this scalar output into every ancestor leaf."""
        if self.value.shape != (1, 1):
            raise ShapeError(f"backward() requires a scalar output, got shape {self.shape}")
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, emitted = stack.pop()
            if emitted:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.needs_grad and id(parent) not in visited:
                    stack.append((parent, False))
        self.grad = np.ones((1, 1))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # Operator sugar; scalars and arrays are wrapped as constants.
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, mul(as_tensor(other), -1.0))

    def __rsub__(self, other):
        return add(as_tensor(other), mul(self, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, needs_grad={self.needs_grad})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _accumulate(node: Tensor, grad: np.ndarray) -> None:
    if not node.needs_grad:
        return
    if node.grad is None:
        node.grad = grad.copy()
    else:
        node.grad += grad


def _unbroadcast(grad: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    out = grad
    if shape[0] == 1 and out.shape[0] != 1:
        out = out.sum(axis=0, keepdims=True)
    if shape[1] == 1 and out.shape[1] != 1:
        out = out.sum(axis=1, keepdims=True)
    if out.shape != shape:
        raise ShapeError(f"cannot reduce gradient of shape {grad.shape} to {shape}")
    return out


def _broadcastable(a: tuple[int, int], b: tuple[int, int]) -> bool:
    return all(x == y or x == 1 or y == 1 for x, y in zip(a, b))


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if not _broadcastable(a.shape, b.shape):
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} do not broadcast")
    out = Tensor(a.value + b.value, needs_grad=a.needs_grad or b.needs_grad, _parents=(a, b))

    def backward(g: np.ndarray) -> None:
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    out._backward = backward
    return out


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if not _broadcastable(a.shape, b.shape):
        raise ShapeError(f"mul: shapes {a.shape} and {b.shape} do not broadcast")
    out = Tensor(a.value * b.value, needs_grad=a.needs_grad or b.needs_grad, _parents=(a, b))

    def backward(g: np.ndarray) -> None:
        _accumulate(a, _unbroadcast(g * b.value, a.shape))
        _accumulate(b, _unbroadcast(g * a.value, b.shape))

    out._backward = backward
    return out


def matmul(a, b) -> Tensor:
    """Matrix product a @ b, exact to floating point."""
    a, b = as_tensor(a), as_tensor(b)
    if a.cols != b.rows:
        raise ShapeError(f"matmul: inner dimensions differ ({a.shape} @ {b.shape})")
    out = Tensor(a.value @ b.value, needs_grad=a.needs_grad or b.needs_grad, _parents=(a, b))

    def backward(g: np.ndarray) -> None:
        if a.needs_grad:
            _accumulate(a, g @ b.value.T)
        if b.needs_grad:
            _accumulate(b, a.value.T @ g)

    out._backward = backward
    return out


def _elementwise(a, fn, dfn) -> Tensor:
    a = as_tensor(a)
    value = fn(a.value)
    out = Tensor(value, needs_grad=a.needs_grad, _parents=(a,))

    def backward(g: np.ndarray) -> None:
        _accumulate(a, g * dfn(a.value, value))

    out._backward = backward
    return out


def tanh(a) -> Tensor:
    return _elementwise(a, np.tanh, lambda x, y: 1.0 - y * y)


def _sigmoid_values(x: np.ndarray) -> np.ndarray:
    # Stable in both tails: never exponentiates a large positive argument.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a) -> Tensor:
    return _elementwise(a, _sigmoid_values, lambda x, y: y * (1.0 - y))


def exp(a) -> Tensor:
    return _elementwise(a, np.exp, lambda x, y: y)


def log(a) -> Tensor:
    return _elementwise(a, np.log, lambda x, y: 1.0 / x)


def clamp(a, lo: float, hi: float) -> Tensor:
    """Clip into [lo, hi]; gradient passes only through the unclamped interior."""
    a = as_tensor(a)
    out = Tensor(np.clip(a.value, lo, hi), needs_grad=a.needs_grad, _parents=(a,))
    mask = (a.value > lo) & (a.value < hi)

    def backward(g: np.ndarray) -> None:
        _accumulate(a, g * mask)

    out._backward = backward
    return out


def complex_abs(re, im) -> Tensor:
    """Elementwise modulus sqrt(re^2 + im^2).

    The subgradient at a bin whose modulus is exactly zero is defined as 0,
    which avoids the division by zero in re/|z|, im/|z|.
    """
    re, im = as_tensor(re), as_tensor(im)
    if re.shape != im.shape:
        raise ShapeError(f"complex_abs: shapes {re.shape} and {im.shape} differ")
    value = np.hypot(re.value, im.value)
    out = Tensor(value, needs_grad=re.needs_grad or im.needs_grad, _parents=(re, im))
    nonzero = value > 0.0

    def backward(g: np.ndarray) -> None:
        safe = np.where(nonzero, value, 1.0)
        _accumulate(re, g * np.where(nonzero, re.value / safe, 0.0))
        _accumulate(im, g * np.where(nonzero, im.value / safe, 0.0))

    out._backward = backward
    return out


def softmax_rows(a) -> Tensor:
    """Row-wise softmax with max-subtraction for overflow stability."""
    a = as_tensor(a)
    if a.value.size == 0:
        raise ShapeError("softmax of an empty tensor")
    shifted = a.value - a.value.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=1, keepdims=True)
    out = Tensor(s, needs_grad=a.needs_grad, _parents=(a,))

    def backward(g: np.ndarray) -> None:
        inner = (g * s).sum(axis=1, keepdims=True)
        _accumulate(a, s * (g - inner))

    out._backward = backward
    return out


def softmax(v) -> Tensor:
    """Softmax of a single vector (row tensor)."""
    t = as_tensor(v)
    if t.rows != 1:
        raise ShapeError(f"softmax expects a vector, got shape {t.shape}")
    return softmax_rows(t)


def transpose(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.value.T, needs_grad=a.needs_grad, _parents=(a,))

    def backward(g: np.ndarray) -> None:
        _accumulate(a, g.T)

    out._backward = backward
    return out


def reshape(a, rows: int, cols: int) -> Tensor:
    a = as_tensor(a)
    if rows * cols != a.value.size:
        raise ShapeError(f"cannot reshape {a.shape} to ({rows}, {cols})")
    out = Tensor(a.value.reshape(rows, cols), needs_grad=a.needs_grad, _parents=(a,))

    def backward(g: np.ndarray) -> None:
        _accumulate(a, g.reshape(a.shape))

    out._backward = backward
    return out


def slice_rows(a, start: int, stop: int) -> Tensor:
    a = as_tensor(a)
    if not (0 <= start < stop <= a.rows):
        raise ShapeError(f"row slice [{start}:{stop}] out of bounds for {a.shape}")
    out = Tensor(a.value[start:stop, :], needs_grad=a.needs_grad, _parents=(a,))

    def backward(g: np.ndarray) -> None:
        full = np.zeros(a.shape)
        full[start:stop, :] = g
        _accumulate(a, full)

    out._backward = backward
    return out


def slice_cols(a, start: int, stop: int) -> Tensor:
    a = as_tensor(a)
    if not (0 <= start < stop <= a.cols):
        raise ShapeError(f"column slice [{start}:{stop}] out of bounds for {a.shape}")
    out = Tensor(a.value[:, start:stop], needs_grad=a.needs_grad, _parents=(a,))

    def backward(g: np.ndarray) -> None:
        full = np.zeros(a.shape)
        full[:, start:stop] = g
        _accumulate(a, full)

    out._backward = backward
    return out


def _concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat of an empty sequence")
    value = np.concatenate([t.value for t in tensors], axis=axis)
    out = Tensor(
        value,
        needs_grad=any(t.needs_grad for t in tensors),
        _parents=tuple(tensors),
    )
    sizes = [t.shape[axis] for t in tensors]

    def backward(g: np.ndarray) -> None:
        offset = 0
        for t, size in zip(tensors, sizes):
            piece = g[offset : offset + size, :] if axis == 0 else g[:, offset : offset + size]
            _accumulate(t, piece)
            offset += size

    out._backward = backward
    return out


def concat_rows(tensors: Sequence[Tensor]) -> Tensor:
    return _concat(tensors, axis=0)


def concat_cols(tensors: Sequence[Tensor]) -> Tensor:
    return _concat(tensors, axis=1)


def _stack_steps(steps: Sequence[Tensor], axis: int) -> Tensor:
    steps = [as_tensor(t) for t in steps]
    if not steps:
        raise ShapeError("stack of an empty sequence")
    b, k = steps[0].shape
    for s in steps:
        if s.shape != (b, k):
            raise ShapeError("stacked steps must share one shape")
    n_steps = len(steps)
    cube = np.stack([s.value for s in steps], axis=axis)  # axis=2: B,K,T; axis=1: B,T,K
    rows = b * (k if axis == 2 else n_steps)
    cols = n_steps if axis == 2 else k
    out = Tensor(
        cube.reshape(rows, cols),
        needs_grad=any(s.needs_grad for s in steps),
        _parents=tuple(steps),
    )

    def backward(g: np.ndarray) -> None:
        g3 = g.reshape(cube.shape)
        for t, s in enumerate(steps):
            _accumulate(s, g3[:, :, t] if axis == 2 else g3[:, t, :])

    out._backward = backward
    return out


def stack_channel_rows(steps: Sequence[Tensor]) -> Tensor:
    """Stack per-step BxN outputs into a (B*N)xT matrix of channel time series.

    Row s*N + i holds channel i of batch element s across the T steps.
    """
    return _stack_steps(steps, axis=2)


def stack_token_rows(steps: Sequence[Tensor]) -> Tensor:
    """Stack per-step BxH states into a (B*T)xH matrix of per-step tokens.

    Row s*T + t holds the step-t state of batch element s.
    """
    return _stack_steps(steps, axis=1)


def sum_all(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.value.sum(), needs_grad=a.needs_grad, _parents=(a,))

    def backward(g: np.ndarray) -> None:
        _accumulate(a, np.full(a.shape, g[0, 0]))

    out._backward = backward
    return out


def mean_rows(a) -> Tensor:
    """Mean over rows, returning a 1xC tensor."""
    a = as_tensor(a)
    out = Tensor(a.value.mean(axis=0, keepdims=True), needs_grad=a.needs_grad, _parents=(a,))

    def backward(g: np.ndarray) -> None:
        _accumulate(a, np.broadcast_to(g / a.rows, a.shape).copy())

    out._backward = backward
    return out


def dft(x) -> np.ndarray:
    """Discrete Fourier transform of a real sequence, all K = len(x) bins.

    bin k = sum_t x(t) * exp(-2*pi*i*k*t/T).  Evaluated by the naive O(T^2)
    definition matrix; fine at the few-hundred-sample scale this library
    targets.
    """
    arr = np.asarray(x, dtype=np.float64).ravel()
    if arr.size < 1:
        raise ShapeError("dft of an empty sequence")
    t_len = arr.size
    k = np.arange(t_len)
    w = np.exp(-2j * np.pi * np.outer(k, k) / t_len)
    return w @ arr


def grad_check(
    f: Callable[[Tensor], Tensor],
    theta,
    eps: float = 1e-5,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``f`` receives a leaf tensor shaped like ``theta`` (1-D inputs become row
    vectors) and must return a scalar tensor.  For every coordinate the
    analytic gradient is compared against (f(t+eps) - f(t-eps)) / (2 eps)
    with denominator max(|analytic|, |numeric|, 1e-8).
    """
    base = _as_array(np.asarray(theta, dtype=np.float64))
    leaf = Tensor(base, needs_grad=True)
    out = f(leaf)
    if out.value.shape != (1, 1):
        raise ShapeError(f"grad_check target must be scalar, got {out.value.shape}")
    if not np.isfinite(out.value[0, 0]):
        raise EvaluationError("function value is not finite at theta")
    out.backward()
    analytic = leaf.grad if leaf.grad is not None else np.zeros_like(base)

    def value_at(arr: np.ndarray) -> float:
        v = f(Tensor(arr)).item()
        if not math.isfinite(v):
            raise EvaluationError("function value is not finite at a perturbed point")
        return v

    worst = 0.0
    for idx in np.ndindex(base.shape):
        plus = base.copy()
        plus[idx] += eps
        minus = base.copy()
        minus[idx] -= eps
        numeric = (value_at(plus) - value_at(minus)) / (2.0 * eps)
        a = float(analytic[idx])
        rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
        worst = max(worst, rel)
    return worst
