"""Reverse-mode automatic differentiation over numpy arrays.

Every operation on a :class:`Tensor` that requires gradients records its
parents and a local gradient function. ``backward`` walks the recorded
graph once in reverse topological order. Values are float64 throughout.

    >>> x = Tensor(3.0, requires_grad=True)
    >>> (x * x).backward()
    >>> x.grad
    array(6.)
"""
import contextlib
import logging
import threading

import numpy as np

from .errors import ShapeError

log = logging.getLogger(__name__)

_local = threading.local()


def is_grad_enabled():
    """Whether operations are currently recorded."""
    return getattr(_local, "grad_enabled", True)


@contextlib.contextmanager
def no_grad():
    """Disable recording inside the block, e.g. while sampling episodes."""
    previous = is_grad_enabled()
    _local.grad_enabled = False
    try:
        yield
    finally:
        _local.grad_enabled = previous


def _active_tapes():
    if not hasattr(_local, "tapes"):
        _local.tapes = []
    return _local.tapes


class Tape:
    """Records the operations created while it is active.

    Using a tape is optional, :meth:`Tensor.backward` finds the graph from
    the output alone; a tape keeps the recorded order for inspection and
    for backpropagating in creation order.
    """

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        _active_tapes().append(self)
        return self

    def __exit__(self, *exc):
        _active_tapes().remove(self)

    def __len__(self):
        return len(self.nodes)

    def backward(self, output):
        """Backpropagate from a scalar output through the recorded nodes."""
        backward(output, order=[n for n in self.nodes if n is not output])


class Tensor:
    """An n-dimensional float64 array with an optional gradient."""

    __array_ufunc__ = None

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self.name = name
        self._parents = ()
        self._grad_fn = None

    def __repr__(self):
        name = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{name})"

    @property
    def shape(self):
        """The dimensions."""
        return self.data.shape

    @property
    def ndim(self):
        """The number of dimensions."""
        return self.data.ndim

    @property
    def is_leaf(self):
        """Whether the tensor was not produced by a recorded operation."""
        return self._grad_fn is None

    def item(self):
        """The value of a single-element tensor."""
        if self.data.size != 1:
            raise ShapeError(f"item needs a single element, got {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self):
        """A copy of the data."""
        return self.data.copy()

    def zero_grad(self):
        """Forget the accumulated gradient."""
        self.grad = None

    def backward(self):
        """Accumulate d self / d leaf into every leaf's ``grad``."""
        backward(self)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return mul(self, power(other, -1.0))
        return mul(self, 1.0 / other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None):
        """Sum over an axis, or all entries."""
        return tensor_sum(self, axis)

    def mean(self, axis=None):
        """Mean over an axis, or all entries."""
        count = self.data.size if axis is None else self.data.shape[axis]
        return tensor_sum(self, axis) * (1.0 / count)


def as_tensor(value):
    """Wrap constants, tensors pass through."""
    return value if isinstance(value, Tensor) else Tensor(value)


def _record(data, parents, grad_fn):
    """Create the output tensor of an operation and record it if needed."""
    out = Tensor(data)
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._grad_fn = grad_fn
        for tape in _active_tapes():
            tape.nodes.append(out)
    return out


def _unbroadcast(grad, shape):
    """Sum a broadcast gradient back to the operand's shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(
            f"Shapes {a.shape} and {b.shape} do not broadcast"
        ) from None


def _topological(output):
    order, visited, stack = [], set(), [(output, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(output, order=None):
    """Backpropagate from a scalar output.

    Leaves accumulate into ``grad``; intermediate gradients are discarded.

    Raises:
        ShapeError: If the output is not a single element.
    """
    if output.data.size != 1:
        raise ShapeError(
            f"backward needs a scalar output, got shape {output.shape}"
        )
    if not output.requires_grad:
        return
    if order is None:
        order = _topological(output)[:-1]
    grads = {id(output): np.ones_like(output.data)}
    for node in [output] + list(reversed(order)):
        grad = grads.pop(id(node), None)
        if grad is None:
            continue
        if node.is_leaf:
            node.grad = grad if node.grad is None else node.grad + grad
            continue
        for parent, parent_grad in zip(node._parents, node._grad_fn(grad)):
            if parent_grad is None or not parent.requires_grad:
                continue
            key = id(parent)
            if parent.is_leaf:
                parent.grad = (
                    parent_grad
                    if parent.grad is None
                    else parent.grad + parent_grad
                )
            elif key in grads:
                grads[key] = grads[key] + parent_grad
            else:
                grads[key] = parent_grad


def add(a, b):
    """a + b with broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b)
    return _record(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def neg(a):
    """−a."""
    return _record(-a.data, (a,), lambda g: (-g,))


def mul(a, b):
    """Elementwise a * b with broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b)
    return _record(
        a.data * b.data,
        (a, b),
        lambda g: (
            _unbroadcast(g * b.data, a.shape),
            _unbroadcast(g * a.data, b.shape),
        ),
    )


def power(a, exponent):
    """Elementwise a ** exponent for a constant exponent."""
    return _record(
        a.data**exponent,
        (a,),
        lambda g: (g * exponent * a.data ** (exponent - 1.0),),
    )


def matmul(a, b):
    """Matrix product of 1-d or 2-d tensors (row-vector convention)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim not in (1, 2) or b.ndim not in (1, 2) or (
        a.shape[-1] != b.shape[0]
    ):
        raise ShapeError(f"Cannot multiply shapes {a.shape} and {b.shape}")

    def grad_fn(g):
        a2 = a.data if a.ndim == 2 else a.data[np.newaxis]
        b2 = b.data if b.ndim == 2 else b.data[:, np.newaxis]
        g2 = g.reshape(a2.shape[0], b2.shape[1])
        return (
            (g2 @ b2.T).reshape(a.shape),
            (a2.T @ g2).reshape(b.shape),
        )

    return _record(a.data @ b.data, (a, b), grad_fn)


def tanh(a):
    """Elementwise hyperbolic tangent."""
    out = np.tanh(a.data)
    return _record(out, (a,), lambda g: (g * (1.0 - out * out),))


def sigmoid(a):
    """Elementwise logistic function."""
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _record(out, (a,), lambda g: (g * out * (1.0 - out),))


def relu(a):
    """Elementwise rectifier."""
    mask = a.data > 0.0
    return _record(a.data * mask, (a,), lambda g: (g * mask,))


def exp(a):
    """Elementwise exponential."""
    out = np.exp(a.data)
    return _record(out, (a,), lambda g: (g * out,))


def log(a):
    """Elementwise natural logarithm."""
    return _record(np.log(a.data), (a,), lambda g: (g / a.data,))


def tensor_sum(a, axis=None):
    """Sum over an axis, or all entries."""

    def grad_fn(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _record(a.data.sum(axis=axis), (a,), grad_fn)


def concat(tensors, axis=-1):
    """Join tensors along an existing axis."""
    tensors = [as_tensor(t) for t in tensors]
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"Cannot concatenate: {exc}") from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _record(
        data,
        tuple(tensors),
        lambda g: tuple(np.split(g, bounds, axis=axis)),
    )


def stack(tensors, axis=0):
    """Join equally shaped tensors along a new axis."""
    tensors = [as_tensor(t) for t in tensors]
    try:
        data = np.stack([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"Cannot stack: {exc}") from None
    return _record(
        data,
        tuple(tensors),
        lambda g: tuple(np.moveaxis(g, axis, 0)),
    )


def getitem(a, index):
    """Basic or integer-array indexing."""

    def grad_fn(g):
        grad = np.zeros_like(a.data)
        np.add.at(grad, index, g)
        return (grad,)

    return _record(a.data[index], (a,), grad_fn)


def take_rows(table, indices):
    """Rows of a 2-d table, e.g. an embedding lookup."""
    indices = np.asarray(indices, dtype=np.int64)
    if table.ndim != 2:
        raise ShapeError(f"take_rows needs a 2-d table, got {table.shape}")
    if indices.size and (
        indices.min() < 0 or indices.max() >= table.shape[0]
    ):
        raise ShapeError(
            f"Row indices out of range [0, {table.shape[0]}): {indices}"
        )
    return getitem(table, indices)


def log_softmax(a, axis=-1):
    """log softmax along an axis."""
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    probs = np.exp(out)
    return _record(
        out,
        (a,),
        lambda g: (g - probs * g.sum(axis=axis, keepdims=True),),
    )


def softmax(a, axis=-1):
    """softmax along an axis."""
    return exp(log_softmax(a, axis=axis))


def detach(a):
    """The same values without a gradient path (stop-gradient)."""
    return Tensor(a.data)


def scale_gradient(a, factor):
    """Identity forward, multiplies the backward gradient by ``factor``."""
    return _record(a.data.copy(), (a,), lambda g: (g * factor,))
