"""
Dense float64 tensors with reverse-mode differentiation.

Every op builds its output through `Tensor._from_op`, handing over the
parents and a closure that maps the output gradient to one gradient per
parent. `Tensor.backward` walks the graph once in reverse topological order
and sums the contributions of nodes feeding several consumers.
"""
import contextlib
from contextvars import ContextVar

import numpy as np

from common.exceptions import ShapeMismatchError

# scoped to the current thread or task
_grad_enabled: ContextVar[bool] = ContextVar("grad_enabled", default=True)


@contextlib.contextmanager
def no_grad():
    """Evaluate without recording a graph."""
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.array(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self.op = "leaf"
        self._parents = ()
        self._backward = None

    @classmethod
    def _from_op(cls, data, parents, op, backward):
        out = Tensor.__new__(Tensor)
        out.data = np.asarray(data, dtype=np.float64)
        out.grad = None
        out.op = op
        tracked = _grad_enabled.get() and any(p.requires_grad for p in parents)
        out.requires_grad = tracked
        out._parents = tuple(parents) if tracked else ()
        out._backward = backward if tracked else None
        return out

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def zero_grad(self):
        self.grad = None

    def backward(self):
        if self.data.size != 1:
            raise ShapeMismatchError("backward (loss must be scalar)", self.shape, ())
        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(self._topological_order()):
            grad = grads.pop(id(node), None)
            if grad is None:
                continue
            if node._backward is None:
                node.grad = np.array(grad) if node.grad is None else node.grad + grad
                continue
            node.grad = grad
            for parent, parent_grad in zip(node._parents, node._backward(grad)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = parent_grad if key not in grads else grads[key] + parent_grad

    def _topological_order(self) -> list["Tensor"]:
        order, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            stack.extend((parent, False) for parent in node._parents if id(parent) not in seen)
        return order

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape)

    def transpose(self, *axes):
        return transpose(self, axes[0] if len(axes) == 1 and isinstance(axes[0], tuple) else axes)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)


class Parameter(Tensor):
    """
    Trainable leaf. An optional binary mask pins entries to zero: the
    effective weight is data * mask, so masked entries never get gradient.
    """

    __slots__ = ("name", "mask")

    def __init__(self, data, name: str = "", mask=None):
        super().__init__(data, requires_grad=True)
        self.name = name
        self.mask = None if mask is None else np.asarray(mask, dtype=np.float64)
        if self.mask is not None:
            if self.mask.shape != self.data.shape:
                raise ShapeMismatchError(f"mask of {name}", self.data.shape, self.mask.shape)
            self.data = self.data * self.mask

    @property
    def n_free(self) -> int:
        return self.size if self.mask is None else int(np.count_nonzero(self.mask))

    def effective(self) -> Tensor:
        return self if self.mask is None else mul(self, self.mask)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast(op, a: Tensor, b: Tensor):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatchError(op, a.shape, b.shape) from None


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast("add", a, b)
    return Tensor._from_op(
        a.data + b.data, (a, b), "add",
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast("sub", a, b)
    return Tensor._from_op(
        a.data - b.data, (a, b), "sub",
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def neg(a) -> Tensor:
    a = as_tensor(a)
    return Tensor._from_op(-a.data, (a,), "neg", lambda g: (-g,))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast("mul", a, b)
    return Tensor._from_op(
        a.data * b.data, (a, b), "mul",
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeMismatchError("matmul", a.shape, b.shape)
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeMismatchError("matmul", a.shape, b.shape) from None

    def backward(g):
        return (
            _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape),
            _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape),
        )

    return Tensor._from_op(a.data @ b.data, (a, b), "matmul", backward)


def relu(x) -> Tensor:
    x = as_tensor(x)
    active = x.data > 0
    return Tensor._from_op(np.where(active, x.data, 0.0), (x,), "relu", lambda g: (g * active,))


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    s = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return Tensor._from_op(s, (x,), "sigmoid", lambda g: (g * s * (1.0 - s),))


def tanh(x) -> Tensor:
    x = as_tensor(x)
    t = np.tanh(x.data)
    return Tensor._from_op(t, (x,), "tanh", lambda g: (g * (1.0 - t * t),))


def square(x) -> Tensor:
    x = as_tensor(x)
    return Tensor._from_op(x.data * x.data, (x,), "square", lambda g: (2.0 * g * x.data,))


def reciprocal_one_plus(x) -> Tensor:
    """1 / (1 + x)."""
    x = as_tensor(x)
    r = 1.0 / (1.0 + x.data)
    return Tensor._from_op(r, (x,), "reciprocal_one_plus", lambda g: (-g * r * r,))


def row_softmax(x, mask=None) -> Tensor:
    """Softmax over the last axis; entries where mask is False get probability 0."""
    x = as_tensor(x)
    logits = x.data if mask is None else np.where(mask, x.data, -np.inf)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (p * (g - (g * p).sum(axis=-1, keepdims=True)),)

    return Tensor._from_op(p, (x,), "row_softmax", backward)


def row_normalize(w, mask, eps: float = 1e-12) -> Tensor:
    """
    Divide non-negative weights by their row sum over the masked entries.
    Rows whose sum falls below eps become uniform over the mask.
    """
    w = as_tensor(w)
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), w.shape)
    kept = np.where(mask, w.data, 0.0)
    total = kept.sum(axis=-1, keepdims=True)
    degenerate = total < eps
    uniform = mask / mask.sum(axis=-1, keepdims=True)
    safe_total = np.where(degenerate, 1.0, total)
    out = np.where(degenerate, uniform, kept / safe_total)

    def backward(g):
        inner = (g * out).sum(axis=-1, keepdims=True)
        grad = np.where(mask & ~degenerate, (g - inner) / safe_total, 0.0)
        return (grad,)

    return Tensor._from_op(out, (w,), "row_normalize", backward)


def rms_norm(x, eps: float = 1e-8) -> Tensor:
    """Parameter-free RMS normalisation over the last axis."""
    x = as_tensor(x)
    rms = np.sqrt((x.data * x.data).mean(axis=-1, keepdims=True) + eps)
    y = x.data / rms

    def backward(g):
        return ((g - y * (g * y).mean(axis=-1, keepdims=True)) / rms,)

    return Tensor._from_op(y, (x,), "rms_norm", backward)


def tsum(x, axis=None, keepdims=False) -> Tensor:
    x = as_tensor(x)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape),)

    return Tensor._from_op(x.data.sum(axis=axis, keepdims=keepdims), (x,), "sum", backward)


def mean(x, axis=None, keepdims=False) -> Tensor:
    x = as_tensor(x)
    count = x.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(tsum(x, axis, keepdims), 1.0 / count)


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    try:
        data = x.data.reshape(shape)
    except ValueError:
        raise ShapeMismatchError("reshape", x.shape, shape) from None
    return Tensor._from_op(data, (x,), "reshape", lambda g: (g.reshape(x.shape),))


def transpose(x, axes) -> Tensor:
    x = as_tensor(x)
    inverse = np.argsort(axes)
    return Tensor._from_op(x.data.transpose(axes), (x,), "transpose", lambda g: (g.transpose(inverse),))


def broadcast_to(x, shape) -> Tensor:
    x = as_tensor(x)
    try:
        data = np.ascontiguousarray(np.broadcast_to(x.data, shape))
    except ValueError:
        raise ShapeMismatchError("broadcast_to", x.shape, shape) from None
    return Tensor._from_op(data, (x,), "broadcast_to", lambda g: (_unbroadcast(g, x.shape),))


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeMismatchError("concat", *(t.shape for t in tensors)) from None
    splits = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return Tensor._from_op(data, tensors, "concat", lambda g: tuple(np.split(g, splits, axis=axis)))


def stack(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        data = np.stack([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeMismatchError("stack", *(t.shape for t in tensors)) from None

    def backward(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return Tensor._from_op(data, tensors, "stack", backward)


def getitem(x, index) -> Tensor:
    x = as_tensor(x)

    def backward(g):
        grad = np.zeros_like(x.data)
        np.add.at(grad, index, g)
        return (grad,)

    return Tensor._from_op(x.data[index], (x,), "slice", backward)


def cross_entropy_logits(logits, targets) -> Tensor:
    """Mean cross-entropy of integer targets against logits over the last axis."""
    logits = as_tensor(logits)
    targets = np.asarray(targets)
    n_classes = logits.shape[-1]
    if logits.shape[:-1] != targets.shape:
        raise ShapeMismatchError("cross_entropy_logits", logits.shape, targets.shape)
    flat = logits.data.reshape(-1, n_classes)
    labels = targets.reshape(-1).astype(np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ShapeMismatchError("cross_entropy_logits (target out of range)", (n_classes,), (int(labels.max()),))

    shifted = flat - flat.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_p = shifted - log_z
    rows = np.arange(labels.size)
    loss = -log_p[rows, labels].mean()

    def backward(g):
        grad = np.exp(log_p)
        grad[rows, labels] -= 1.0
        return ((g * grad / labels.size).reshape(logits.shape),)

    return Tensor._from_op(loss, (logits,), "cross_entropy", backward)
