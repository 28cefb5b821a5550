"""Minimal dense-tensor engine with reverse-mode automatic differentiation.

Tensors wrap numpy arrays of rank <= 3. Every operation records its parent
tensors and a backward closure; ``backward`` on a scalar loss walks the
recorded graph once in reverse topological order and accumulates gradients
into the leaf tensors created with ``requires_grad=True``. Repeated backward
calls accumulate into ``.grad``; call ``zero_grad`` between optimizer steps.

Arithmetic runs in float64 in memory; the 32-bit storage contract is
enforced at the tensor-file boundary (see ``serhead.tensorfile``).

Broadcasting is deliberately narrow: two operands combine elementwise when
their shapes are equal, when either is a scalar, or when one is a rank-1
vector matching the other's trailing dimension (vector against matrix rows).
Anything else raises ``DimensionError``.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError, DimensionError, DomainError, FlakyCheckError


def _as_array(data) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim > 3:
        raise ContractError(f"rank {arr.ndim} > 3 is not supported")
    return arr


class Tensor:
    """A dense array plus the bookkeeping needed for reverse-mode autodiff.

    ``requires_grad`` marks a leaf whose gradient should be retained; op
    outputs track gradients automatically whenever any input does, but only
    leaves keep a ``.grad`` buffer after ``backward``.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_array(data)
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    # -- construction helpers ------------------------------------------------

    @staticmethod
    def zeros(shape, requires_grad: bool = False) -> "Tensor":
        return Tensor(np.zeros(shape), requires_grad=requires_grad)

    @staticmethod
    def _from_op(data: np.ndarray, parents, backward) -> "Tensor":
        out = Tensor(data)
        if any(p._tracked() for p in parents):
            out._parents = tuple(parents)
            out._backward = backward
        return out

    def _tracked(self) -> bool:
        return self.requires_grad or self._parents != ()

    # -- basic introspection ---------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # -- operator sugar -------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def tanh(self):
        return tanh(self)

    def relu(self):
        return relu(self)

    def sqrt(self):
        return sqrt(self)

    def log(self):
        return log(self)

    def exp(self):
        return exp(self)

    def sum(self):
        return tensor_sum(self)

    def reshape(self, shape):
        return reshape(self, shape)

    def transpose(self):
        return transpose(self)

    @property
    def T(self):
        return transpose(self)

    def backward(self) -> None:
        backward(self)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _check_broadcast(sa: tuple, sb: tuple) -> None:
    if sa == sb or sa == () or sb == ():
        return
    if len(sb) == 1 and sb[0] == sa[-1]:
        return
    if len(sa) == 1 and sa[0] == sb[-1]:
        return
    raise DimensionError(f"shapes {sa} and {sb} are not broadcast-compatible")


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


# -- elementwise ops ---------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    _check_broadcast(a.shape, b.shape)
    out_data = a.data + b.data

    def backward_fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor._from_op(out_data, (a, b), backward_fn)


def sub(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    _check_broadcast(a.shape, b.shape)
    out_data = a.data - b.data

    def backward_fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return Tensor._from_op(out_data, (a, b), backward_fn)


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    _check_broadcast(a.shape, b.shape)
    out_data = a.data * b.data

    def backward_fn(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return Tensor._from_op(out_data, (a, b), backward_fn)


def div(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    _check_broadcast(a.shape, b.shape)
    if np.any(b.data == 0.0):
        raise DomainError("division by zero")
    out_data = a.data / b.data

    def backward_fn(g):
        ga = _unbroadcast(g / b.data, a.shape)
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.shape)
        return ga, gb

    return Tensor._from_op(out_data, (a, b), backward_fn)


def scale(a: Tensor, c: float) -> Tensor:
    a = _wrap(a)
    c = float(c)
    out_data = a.data * c

    def backward_fn(g):
        return (g * c,)

    return Tensor._from_op(out_data, (a,), backward_fn)


def tanh(a: Tensor) -> Tensor:
    a = _wrap(a)
    out_data = np.tanh(a.data)

    def backward_fn(g):
        return (g * (1.0 - out_data * out_data),)

    return Tensor._from_op(out_data, (a,), backward_fn)


def relu(a: Tensor) -> Tensor:
    a = _wrap(a)
    out_data = np.maximum(a.data, 0.0)

    def backward_fn(g):
        return (g * (a.data > 0.0),)

    return Tensor._from_op(out_data, (a,), backward_fn)


def sqrt(a: Tensor) -> Tensor:
    a = _wrap(a)
    if np.any(a.data < 0.0):
        raise DomainError("sqrt of negative value")
    out_data = np.sqrt(a.data)

    def backward_fn(g):
        return (g * 0.5 / out_data,)

    return Tensor._from_op(out_data, (a,), backward_fn)


def log(a: Tensor) -> Tensor:
    a = _wrap(a)
    if np.any(a.data <= 0.0):
        raise DomainError("log of non-positive value")
    out_data = np.log(a.data)

    def backward_fn(g):
        return (g / a.data,)

    return Tensor._from_op(out_data, (a,), backward_fn)


def exp(a: Tensor) -> Tensor:
    a = _wrap(a)
    out_data = np.exp(a.data)

    def backward_fn(g):
        return (g * out_data,)

    return Tensor._from_op(out_data, (a,), backward_fn)


def clamp_min(a: Tensor, lo: float) -> Tensor:
    """max(a, lo), built from relu so gradients vanish below the floor."""
    return add(relu(sub(a, lo)), lo)


# -- structural / reduction ops ----------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul expects two matrices, got ranks {a.ndim} and {b.ndim}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul inner dims differ: {a.shape} x {b.shape}")
    out_data = a.data @ b.data

    def backward_fn(g):
        return g @ b.data.T, a.data.T @ g

    return Tensor._from_op(out_data, (a, b), backward_fn)


def softmax(x: Tensor) -> Tensor:
    """Stable softmax over a rank-1 tensor (max-subtracted)."""
    x = _wrap(x)
    if x.ndim != 1 or x.shape[0] == 0:
        raise DimensionError(f"softmax expects a non-empty vector, got shape {x.shape}")
    shifted = x.data - x.data.max()
    e = np.exp(shifted)
    out_data = e / e.sum()

    def backward_fn(g):
        return (out_data * (g - np.dot(g, out_data)),)

    return Tensor._from_op(out_data, (x,), backward_fn)


def frame_mean(x: Tensor) -> Tensor:
    """Mean over the frame axis (axis 0) of an [m x d] tensor."""
    x = _wrap(x)
    if x.ndim != 2 or x.shape[0] == 0:
        raise DimensionError(f"frame_mean expects [m x d] with m >= 1, got {x.shape}")
    m = x.shape[0]
    out_data = x.data.mean(axis=0)

    def backward_fn(g):
        return (np.broadcast_to(g / m, x.shape).copy(),)

    return Tensor._from_op(out_data, (x,), backward_fn)


def frame_var(x: Tensor) -> Tensor:
    """Population variance (divisor m) over the frame axis of [m x d]."""
    x = _wrap(x)
    if x.ndim != 2 or x.shape[0] == 0:
        raise DimensionError(f"frame_var expects [m x d] with m >= 1, got {x.shape}")
    m = x.shape[0]
    centered = x.data - x.data.mean(axis=0)
    out_data = (centered * centered).sum(axis=0) / m

    def backward_fn(g):
        # d var/d x[i,k] = 2 (x[i,k] - mean[k]) / m; the mean path cancels.
        return (2.0 * centered / m * g,)

    return Tensor._from_op(out_data, (x,), backward_fn)


def tensor_sum(x: Tensor) -> Tensor:
    """Sum of all entries, as a scalar tensor."""
    x = _wrap(x)
    out_data = np.asarray(x.data.sum())

    def backward_fn(g):
        return (np.full(x.shape, float(g)),)

    return Tensor._from_op(out_data, (x,), backward_fn)


def concat(a: Tensor, b: Tensor) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    if a.ndim != 1 or b.ndim != 1:
        raise DimensionError(f"concat expects two vectors, got ranks {a.ndim} and {b.ndim}")
    d1 = a.shape[0]
    out_data = np.concatenate([a.data, b.data])

    def backward_fn(g):
        return g[:d1], g[d1:]

    return Tensor._from_op(out_data, (a, b), backward_fn)


def reshape(x: Tensor, shape) -> Tensor:
    x = _wrap(x)
    shape = tuple(shape)
    if int(np.prod(shape, dtype=np.int64)) != x.data.size:
        raise DimensionError(f"cannot reshape {x.shape} to {shape}")
    out_data = x.data.reshape(shape)

    def backward_fn(g):
        return (g.reshape(x.shape),)

    return Tensor._from_op(out_data, (x,), backward_fn)


def transpose(x: Tensor) -> Tensor:
    x = _wrap(x)
    if x.ndim != 2:
        raise DimensionError(f"transpose expects a matrix, got rank {x.ndim}")
    out_data = x.data.T.copy()

    def backward_fn(g):
        return (g.T,)

    return Tensor._from_op(out_data, (x,), backward_fn)


def take_row(x: Tensor, i: int) -> Tensor:
    """Row i of a matrix as a vector; backward scatters into that row."""
    x = _wrap(x)
    if x.ndim != 2:
        raise DimensionError(f"take_row expects a matrix, got rank {x.ndim}")
    if not 0 <= i < x.shape[0]:
        raise DimensionError(f"row {i} out of range for {x.shape}")
    out_data = x.data[i].copy()

    def backward_fn(g):
        full = np.zeros_like(x.data)
        full[i] = g
        return (full,)

    return Tensor._from_op(out_data, (x,), backward_fn)


def stack_rows(vectors) -> Tensor:
    """Stack equal-length vectors into a matrix; backward splits by row."""
    vectors = [_wrap(v) for v in vectors]
    if not vectors:
        raise DimensionError("stack_rows needs at least one vector")
    if any(v.ndim != 1 or v.shape != vectors[0].shape for v in vectors):
        raise DimensionError("stack_rows expects equal-length vectors")
    out_data = np.stack([v.data for v in vectors])

    def backward_fn(g):
        return tuple(g[i] for i in range(len(vectors)))

    return Tensor._from_op(out_data, tuple(vectors), backward_fn)


def dropout(x: Tensor, rate: float, rng: np.random.Generator, training: bool) -> Tensor:
    """Inverted dropout; identity in eval mode so checks stay deterministic."""
    x = _wrap(x)
    if not 0.0 <= rate < 1.0:
        raise ContractError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return scale(x, 1.0)
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)

    def backward_fn(g):
        return (g * mask,)

    return Tensor._from_op(x.data * mask, (x,), backward_fn)


# -- backward pass -----------------------------------------------------------


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into every requires_grad leaf below ``loss``.

    The recorded graph is the DAG of parent references; each node is visited
    exactly once, in reverse topological order.
    """
    if loss.ndim != 0:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")

    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen and p._tracked():
                stack.append((p, False))

    flowing: dict[int, np.ndarray] = {id(loss): np.asarray(1.0)}
    for node in reversed(order):
        g = flowing.pop(id(node), None)
        if g is None:
            continue
        if node.requires_grad:
            node.grad = node.grad + g if node.grad is not None else g.copy()
        if node._backward is None:
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if not parent._tracked():
                continue
            key = id(parent)
            if key in flowing:
                flowing[key] = flowing[key] + pg
            else:
                flowing[key] = pg


def zero_grad(params) -> None:
    for p in params:
        p.zero_grad()


def finite_diff_check(f, params, eps: float = 1e-4) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``f`` must be a deterministic closure over ``params`` (a tensor or a list
    of tensors) returning a scalar loss tensor; dropout must be off. Error is
    |analytic - central| / max(1, |analytic|), maximized over all parameter
    entries.
    """
    if eps <= 0:
        raise ContractError("eps must be positive")
    if isinstance(params, Tensor):
        params = [params]
    if not all(p.requires_grad for p in params):
        raise ContractError("finite_diff_check parameters must have requires_grad")

    base = f().item()
    if f().item() != base:
        raise FlakyCheckError("f is not deterministic; fix seeds and disable dropout")

    for p in params:
        p.zero_grad()
    backward(f())
    analytic = [p.grad.copy() for p in params]

    worst = 0.0
    for p, an in zip(params, analytic):
        flat = p.data.reshape(-1)
        an_flat = an.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = f().item()
            flat[i] = orig - eps
            f_minus = f().item()
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            err = abs(an_flat[i] - numeric) / max(1.0, abs(an_flat[i]))
            worst = max(worst, err)
    return worst
