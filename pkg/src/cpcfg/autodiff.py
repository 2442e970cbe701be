"""Reverse-mode automatic differentiation over dense float64 arrays.

Computation is define-by-run: every operation on :class:`Tensor` values is
evaluated eagerly and recorded on the output node together with a closure
that maps the output gradient to input gradients.  Calling :func:`backward`
on a scalar node walks the recorded graph in reverse topological order.

Negative infinity is a legal value in log-space arrays.  ``exp(-inf)`` is 0
and contributes no gradient; log-sum-exp over an all ``-inf`` slice returns
``-inf`` with zero gradient.
"""

import contextlib
import itertools

import numpy as np

DTYPE = np.float64

_ids = itertools.count()
_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Evaluate without recording the graph (for decoding and validation)."""
    global _grad_enabled
    prev, _grad_enabled = _grad_enabled, False
    try:
        yield
    finally:
        _grad_enabled = prev


class ShapeError(ValueError):
    """Raised when operation inputs have incompatible shapes."""

    def __init__(self, node_id, op, message):
        super().__init__(f"node {node_id} ({op}): {message}")
        self.node_id = node_id
        self.op = op


class Tensor:
    """A node in the computation graph.

    Leaves created directly by the user are trainable when
    ``requires_grad`` is set; interior nodes require a gradient whenever any
    of their parents does.
    """

    __slots__ = ("data", "grad", "requires_grad", "parents", "backward_fn", "op", "id", "name")
    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=DTYPE)
        self.grad = None
        self.requires_grad = requires_grad
        self.parents = ()
        self.backward_fn = None
        self.op = "leaf"
        self.id = next(_ids)
        self.name = name

    @classmethod
    def from_op(cls, data, parents, backward_fn, op):
        """Create an interior node.

        ``backward_fn(g)`` receives the output gradient and returns one
        gradient (or None) per parent, each shaped like that parent.
        """
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.requires_grad = _grad_enabled and any(p.requires_grad for p in parents)
        out.parents = tuple(parents) if out.requires_grad else ()
        out.backward_fn = backward_fn if out.requires_grad else None
        out.op = op
        out.id = next(_ids)
        out.name = None
        return out

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        label = self.name or self.op
        return f"Tensor({label}, shape={self.data.shape})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, index):
        return getitem(self, index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def item(self):
        return float(self.data)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data, name=None):
    return Tensor(np.array(data, dtype=DTYPE), requires_grad=True, name=name)


def _unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _broadcast_shape(a, b, op):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(next(_ids), op, f"cannot broadcast {a.shape} with {b.shape}") from None


# ---------------------------------------------------------------------------
# elementwise binary


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")
    sa, sb = a.shape, b.shape

    def backward(g):
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    return Tensor.from_op(a.data + b.data, (a, b), backward, "add")


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")
    sa, sb = a.shape, b.shape

    def backward(g):
        return _unbroadcast(g, sa), _unbroadcast(-g, sb)

    return Tensor.from_op(a.data - b.data, (a, b), backward, "sub")


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return Tensor.from_op(a.data * b.data, (a, b), backward, "mul")


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "div")
    out = a.data / b.data

    def backward(g):
        return _unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)

    return Tensor.from_op(out, (a, b), backward, "div")


def neg(a):
    return Tensor.from_op(-a.data, (a,), lambda g: (-g,), "neg")


def matmul(a, b):
    """Matrix product with numpy broadcasting over leading axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(next(_ids), "matmul", f"incompatible operands {a.shape} @ {b.shape}")

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return Tensor.from_op(a.data @ b.data, (a, b), backward, "matmul")


# ---------------------------------------------------------------------------
# elementwise unary


def exp(a):
    out = np.exp(a.data)
    return Tensor.from_op(out, (a,), lambda g: (g * out,), "exp")


def log(a):
    with np.errstate(divide="ignore"):
        out = np.log(a.data)

    def backward(g):
        with np.errstate(divide="ignore", invalid="ignore"):
            return (np.where(a.data > 0, g / a.data, 0.0),)

    return Tensor.from_op(out, (a,), backward, "log")


def tanh(a):
    out = np.tanh(a.data)
    return Tensor.from_op(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def sigmoid(a):
    out = 0.5 * (np.tanh(0.5 * a.data) + 1.0)
    return Tensor.from_op(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def relu(a):
    mask = a.data > 0
    return Tensor.from_op(a.data * mask, (a,), lambda g: (g * mask,), "relu")


def clip(a, lo, hi):
    """Clamp to [lo, hi]; the gradient is zero where clamping is active."""
    mask = (a.data >= lo) & (a.data <= hi)
    return Tensor.from_op(np.clip(a.data, lo, hi), (a,), lambda g: (g * mask,), "clip")


# ---------------------------------------------------------------------------
# reductions


def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(ax % ndim for ax in axis))


def _expand(g, axes, keepdims):
    return g if keepdims else np.expand_dims(g, axes)


def tsum(a, axis=None, keepdims=False):
    axes = _norm_axis(axis, a.ndim)
    shape = a.shape

    def backward(g):
        return (np.broadcast_to(_expand(g, axes, keepdims), shape),)

    return Tensor.from_op(a.data.sum(axis=axes, keepdims=keepdims), (a,), backward, "sum")


def mean(a, axis=None, keepdims=False):
    axes = _norm_axis(axis, a.ndim)
    count = int(np.prod([a.shape[ax] for ax in axes]))
    return tsum(a, axes, keepdims) * (1.0 / count)


def tmax(a, axis=None, keepdims=False):
    """Maximum over axes; ties share the gradient equally."""
    axes = _norm_axis(axis, a.ndim)
    out = a.data.max(axis=axes, keepdims=True)

    def backward(g):
        mask = a.data == out
        mask = mask / mask.sum(axis=axes, keepdims=True)
        return (mask * _expand(g, axes, keepdims),)

    data = out if keepdims else np.squeeze(out, axes)
    return Tensor.from_op(data, (a,), backward, "max")


def _lse(x, axes):
    m = x.max(axis=axes, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        return np.log(np.exp(x - m).sum(axis=axes, keepdims=True)) + m


def logsumexp(a, axis=None, keepdims=False):
    """Overflow-safe log-sum-exp; the gradient is softmax of the inputs."""
    axes = _norm_axis(axis, a.ndim)
    out = _lse(a.data, axes)

    def backward(g):
        with np.errstate(invalid="ignore"):
            w = np.exp(a.data - out)
        w = np.where(np.isfinite(out), w, 0.0)
        return (w * _expand(g, axes, keepdims),)

    data = out if keepdims else np.squeeze(out, axes)
    return Tensor.from_op(data, (a,), backward, "logsumexp")


def log_softmax(a, axis=-1):
    axes = _norm_axis(axis, a.ndim)
    out = a.data - _lse(a.data, axes)

    def backward(g):
        return (g - np.exp(out) * g.sum(axis=axes, keepdims=True),)

    return Tensor.from_op(out, (a,), backward, "log_softmax")


def softmax(a, axis=-1):
    axes = _norm_axis(axis, a.ndim)
    out = np.exp(a.data - _lse(a.data, axes))

    def backward(g):
        return (out * (g - (g * out).sum(axis=axes, keepdims=True)),)

    return Tensor.from_op(out, (a,), backward, "softmax")


# ---------------------------------------------------------------------------
# shape manipulation


def reshape(a, shape):
    old = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(next(_ids), "reshape", f"cannot reshape {old} to {shape}") from None
    return Tensor.from_op(out, (a,), lambda g: (g.reshape(old),), "reshape")


def transpose(a, axes=None):
    axes = tuple(range(a.ndim))[::-1] if axes is None else tuple(axes)
    inverse = tuple(np.argsort(axes))
    return Tensor.from_op(a.data.transpose(axes), (a,), lambda g: (g.transpose(inverse),), "transpose")


def broadcast_to(a, shape):
    try:
        out = np.broadcast_to(a.data, shape)
    except ValueError:
        raise ShapeError(next(_ids), "broadcast_to", f"cannot broadcast {a.shape} to {shape}") from None
    old = a.shape
    return Tensor.from_op(out, (a,), lambda g: (_unbroadcast(g, old),), "broadcast_to")


def _is_basic(index):
    if not isinstance(index, tuple):
        index = (index,)
    return all(isinstance(i, (int, slice, type(None), type(Ellipsis))) for i in index)


def getitem(a, index):
    """Basic slicing or numpy advanced (integer array) indexing."""
    try:
        out = a.data[index]
    except IndexError as exc:
        raise ShapeError(next(_ids), "getitem", str(exc)) from None
    shape = a.shape
    basic = _is_basic(index)

    def backward(g):
        grad = np.zeros(shape, dtype=DTYPE)
        if basic:
            grad[index] += g
        else:
            np.add.at(grad, index, g)
        return (grad,)

    return Tensor.from_op(out, (a,), backward, "getitem")


def take(a, indices, axis=0):
    """Gather slices of ``a`` along ``axis`` (embedding lookup)."""
    indices = np.asarray(indices)
    shape = a.shape

    def backward(g):
        grad = np.zeros(shape, dtype=DTYPE)
        moved = np.moveaxis(grad, axis, 0)
        gm = np.moveaxis(g, list(range(axis, axis + indices.ndim)), list(range(indices.ndim)))
        np.add.at(moved, indices, gm)
        return (grad,)

    return Tensor.from_op(np.take(a.data, indices, axis=axis), (a,), backward, "take")


def concatenate(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeError(next(_ids), "concatenate", str(exc)) from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return Tensor.from_op(out, tensors, backward, "concatenate")


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.stack([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeError(next(_ids), "stack", str(exc)) from None

    def backward(g):
        return tuple(np.moveaxis(g, axis, 0))

    return Tensor.from_op(out, tensors, backward, "stack")


# ---------------------------------------------------------------------------
# graph traversal


def topological_order(output):
    order, seen = [], set()
    stack = [(output, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if node.id in seen:
            continue
        seen.add(node.id)
        stack.append((node, True))
        for parent in node.parents:
            if parent.id not in seen:
                stack.append((parent, False))
    return order


def backward(output, params=None):
    """Accumulate d(output)/d(leaf) into ``leaf.grad`` for every trainable leaf.

    ``output`` must hold a single value.  Gradients are reset before the
    pass.  If ``params`` is given, every listed leaf ends with a gradient
    array, zero when the output does not depend on it.  Returns the list of
    gradients for ``params`` (or None).
    """
    if output.data.size != 1:
        raise ValueError(f"backward needs a scalar output, got shape {output.shape} (node {output.id})")
    order = topological_order(output)
    for node in order:
        if node.backward_fn is None:
            node.grad = None
    grads = {output.id: np.ones_like(output.data)}
    for node in reversed(order):
        g = grads.pop(node.id, None)
        if g is None:
            continue
        if node.backward_fn is None:
            if node.requires_grad:
                node.grad = g if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node.parents, node.backward_fn(g)):
            if pg is None or not parent.requires_grad:
                continue
            if pg.shape != parent.shape:
                pg = np.broadcast_to(pg, parent.shape)
            prev = grads.get(parent.id)
            grads[parent.id] = pg if prev is None else prev + pg
    if params is None:
        return None
    out = []
    for p in params:
        if p.grad is None:
            p.grad = np.zeros_like(p.data)
        out.append(p.grad)
    return out


def zero_grad(params):
    for p in params:
        p.grad = None


def check_gradients(fn, params, epsilon=1e-5, tolerance=1e-5, atol=1e-7, max_entries=None, seed=0):
    """Compare backward gradients with central finite differences.

    ``fn()`` rebuilds the graph from the current parameter values and
    returns a scalar Tensor.  ``params`` maps names to leaf tensors.  An
    entry fails when ``|analytic - numeric| > max(atol, tolerance * max(|analytic|, |numeric|))``.
    ``max_entries`` caps the number of coordinates probed per leaf.

    Returns a dict with ``passed`` (bool), ``max_deviation`` (per leaf,
    absolute), ``max_relative`` (per leaf) and ``failures`` (leaf names).
    """
    if not isinstance(params, dict):
        params = {p.name or f"p{i}": p for i, p in enumerate(params)}
    plist = list(params.values())
    zero_grad(plist)
    out = fn()
    analytic = [g.copy() for g in backward(out, plist)]
    rng = np.random.default_rng(seed)
    report = {"max_deviation": {}, "max_relative": {}, "failures": []}
    for (name, p), ga in zip(params.items(), analytic):
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
        worst_abs, worst_rel, failed = 0.0, 0.0, False
        for i in idx:
            orig = flat[i]
            flat[i] = orig + epsilon
            up = float(fn().data)
            flat[i] = orig - epsilon
            down = float(fn().data)
            flat[i] = orig
            numeric = (up - down) / (2 * epsilon)
            a = float(ga.reshape(-1)[i])
            dev = abs(a - numeric)
            scale = max(abs(a), abs(numeric))
            worst_abs = max(worst_abs, dev)
            if scale > 0:
                worst_rel = max(worst_rel, dev / scale)
            if dev > max(atol, tolerance * scale):
                failed = True
        report["max_deviation"][name] = worst_abs
        report["max_relative"][name] = worst_rel
        if failed:
            report["failures"].append(name)
    report["passed"] = not report["failures"]
    return report
