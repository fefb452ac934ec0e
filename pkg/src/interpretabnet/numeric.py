"""Dense 2-D tensors with reverse-mode differentiation.

Every value is a 2-D float64 array; vectors are 1 x n or n x 1 and scalars
are 1 x 1. A :class:`Tensor` records the op that produced it and a closure
that pushes its gradient to its parents, so ``loss.backward()`` fills the
``grad`` of every :class:`Parameter` reachable from ``loss``. Gradients on
parameters accumulate until :func:`zero_grads` is called.
"""
import numpy as np

from . import simplex
from .errors import NumericError, ShapeError


def _as_2d(value):
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        return arr.reshape(1, 1)
    if arr.ndim == 1:
        return arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ShapeError(f"tensors are rank 2, got shape {arr.shape}")
    return arr


def _unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    return grad.sum(axis=axes, keepdims=True)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward")
    # make ndarray <op> Tensor defer to Tensor's reflected operators
    __array_ufunc__ = None

    def __init__(self, data, requires_grad=False, op="const", parents=(), backward=None):
        self.data = _as_2d(data)
        self.grad = None
        self.requires_grad = requires_grad
        self.op = op
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def rows(self):
        return self.data.shape[0]

    @property
    def cols(self):
        return self.data.shape[1]

    def numpy(self):
        return self.data

    def item(self):
        if self.data.size != 1:
            raise ShapeError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.data[0, 0])

    def __repr__(self):
        return f"Tensor(op={self.op}, shape={self.shape})"

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

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, cols):
        return take_cols(self, cols)

    @property
    def T(self):
        return transpose(self)

    def sum(self, axis=None):
        return tsum(self, axis)

    def mean(self, axis=None):
        return tmean(self, axis)

    def backward(self):
        """Accumulate d(self)/d(leaf) into every reachable leaf's ``grad``."""
        if self.data.size != 1:
            raise ShapeError(f"backward() needs a scalar (1x1) output, got {self.shape}")
        order = _topological(self)
        for node in order:
            if not np.all(np.isfinite(node.data)):
                raise NumericError(f"non-finite value produced by op '{node.op}'", op=node.op)
        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if not node._parents:
                if node.requires_grad:
                    if node.grad is None:
                        node.grad = np.zeros_like(node.data)
                    node.grad += g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg


class Parameter(Tensor):
    """A named learnable leaf whose ``grad`` always matches its shape."""

    __slots__ = ("name",)

    def __init__(self, value, name="param"):
        super().__init__(value, requires_grad=True, op="param")
        self.grad = np.zeros_like(self.data)
        self.name = name

    def __repr__(self):
        return f"Parameter({self.name}, shape={self.shape})"


def _topological(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, op, parents, backward):
    requires = any(p.requires_grad for p in parents)
    if not requires:
        return Tensor(data, op=op)
    return Tensor(data, requires_grad=True, op=op, parents=parents, backward=backward)


# ---------------------------------------------------------------------------
# elementwise and structural ops
# ---------------------------------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data
    return _make(out, "add", (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data - b.data
    return _make(out, "sub", (a, b),
                 lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data * b.data
    return _make(out, "mul", (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.cols != b.rows:
        raise ShapeError(f"matmul dimension mismatch: {a.shape} @ {b.shape}")
    out = a.data @ b.data
    return _make(out, "matmul", (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def linear(x, weight, bias=None):
    """Affine map ``x @ weight.T + bias.T`` for a row-stacked batch ``x``.

    ``weight`` is (out x in) and ``bias`` is (out x 1).
    """
    x = as_tensor(x)
    if x.cols != weight.cols:
        raise ShapeError(f"linear expects {weight.cols} input columns, got shape {x.shape}")
    out = x.data @ weight.data.T
    if bias is not None:
        out = out + bias.data.T

    def backward(g):
        grads = (g @ weight.data, g.T @ x.data)
        if bias is not None:
            grads += (g.sum(axis=0)[:, None],)
        return grads

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _make(out, "linear", parents, backward)


def transpose(a):
    return _make(a.data.T.copy(), "transpose", (a,), lambda g: (g.T,))


def take_cols(a, cols):
    """Column slice ``a[:, cols]`` where ``cols`` is a slice or index list."""
    out = a.data[:, cols]

    def backward(g):
        full = np.zeros_like(a.data)
        full[:, cols] += g
        return (full,)

    return _make(out, "take_cols", (a,), backward)


def take_rows(a, rows):
    out = a.data[rows]

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, rows, g)
        return (full,)

    return _make(out, "take_rows", (a,), backward)


def concat_rows(parts):
    sizes = [p.rows for p in parts]
    out = np.concatenate([p.data for p in parts], axis=0)

    def backward(g):
        bounds = np.cumsum(sizes)[:-1]
        return tuple(np.split(g, bounds, axis=0))

    return _make(out, "concat_rows", tuple(parts), backward)


def tsum(a, axis=None):
    if axis is None:
        return _make(a.data.sum().reshape(1, 1), "sum", (a,),
                     lambda g: (np.full_like(a.data, g[0, 0]),))
    out = a.data.sum(axis=axis, keepdims=True)
    return _make(out, "sum", (a,), lambda g: (np.broadcast_to(g, a.shape).copy(),))


def tmean(a, axis=None):
    n = a.data.size if axis is None else a.shape[axis]
    return mul(tsum(a, axis), 1.0 / n)


def square(a):
    return _make(a.data * a.data, "square", (a,), lambda g: (2.0 * g * a.data,))


def exp(a):
    out = np.exp(a.data)
    return _make(out, "exp", (a,), lambda g: (g * out,))


def log(a):
    return _make(np.log(a.data), "log", (a,), lambda g: (g / a.data,))


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def sigmoid(a):
    out = _sigmoid(a.data)
    return _make(out, "sigmoid", (a,), lambda g: (g * out * (1.0 - out),))


def relu(a):
    out = np.maximum(a.data, 0.0)
    return _make(out, "relu", (a,), lambda g: (g * (a.data > 0),))


def elu(a, alpha=1.0):
    x = a.data
    neg = alpha * np.expm1(np.minimum(x, 0.0))
    out = np.where(x > 0, x, neg)
    return _make(out, "elu", (a,), lambda g: (g * np.where(x > 0, 1.0, neg + alpha),))


def prelu(a, slope):
    """max(0, x) + slope * min(0, x) with a learnable 1x1 ``slope``."""
    slope = as_tensor(slope)
    x = a.data
    s = slope.data[0, 0]
    neg = np.minimum(x, 0.0)
    out = np.maximum(x, 0.0) + s * neg

    def backward(g):
        return g * np.where(x > 0, 1.0, s), np.array([[np.sum(g * neg)]])

    return _make(out, "prelu", (a, slope), backward)


def silu(a):
    x = a.data
    sig = _sigmoid(x)
    out = x * sig
    return _make(out, "silu", (a,), lambda g: (g * (sig + x * sig * (1.0 - sig)),))


# ---------------------------------------------------------------------------
# row-wise simplex maps
# ---------------------------------------------------------------------------

def softmax_rows(a):
    p = simplex.softmax(a.data)
    return _make(p, "softmax", (a,), lambda g: (simplex.softmax_vjp(p, g),))


def entmax_rows(a, alpha=1.5, exclude=None):
    """Row-wise alpha-entmax; entries flagged in ``exclude`` get probability 0.

    A row in which every entry is flagged is computed without exclusion.
    """
    z = a.data
    if exclude is not None and exclude.any():
        exclude = exclude & ~exclude.all(axis=1, keepdims=True)
        big = np.where(exclude, -np.inf, z).max(axis=1, keepdims=True)
        z = np.where(exclude, big - 1e6, z)
    p = simplex.entmax(z, alpha)
    if exclude is not None:
        p = np.where(exclude, 0.0, p)
    return _make(p, "entmax", (a,), lambda g: (simplex.entmax_vjp(p, g, alpha),))


def sparsemax_rows(a):
    return entmax_rows(a, 2.0)


# ---------------------------------------------------------------------------
# normalisation and losses
# ---------------------------------------------------------------------------

def chunk_bounds(n_rows, chunk_size):
    """Row ranges for ceil(n / chunk_size) ghost chunks of near-equal size."""
    if chunk_size is None or chunk_size >= n_rows:
        return [(0, n_rows)]
    n_chunks = -(-n_rows // chunk_size)
    edges = np.linspace(0, n_rows, n_chunks + 1).round().astype(int)
    return [(int(lo), int(hi)) for lo, hi in zip(edges[:-1], edges[1:])]


def standardize_chunks(a, chunk_size, eps):
    """Standardise each ghost chunk with its own mean and biased variance.

    Returns the standardised tensor together with the per-chunk
    (mean, variance, row count) so callers can update running statistics.
    """
    x = a.data
    out = np.empty_like(x)
    cache, stats = [], []
    for lo, hi in chunk_bounds(x.shape[0], chunk_size):
        xc = x[lo:hi]
        mu = xc.mean(axis=0, keepdims=True)
        var = xc.var(axis=0, keepdims=True)
        inv = 1.0 / np.sqrt(var + eps)
        xhat = (xc - mu) * inv
        out[lo:hi] = xhat
        cache.append((lo, hi, xhat, inv))
        stats.append((mu, var, hi - lo))

    def backward(g):
        dx = np.empty_like(g)
        for lo, hi, xhat, inv in cache:
            gc = g[lo:hi]
            m = hi - lo
            dx[lo:hi] = inv / m * (m * gc - gc.sum(axis=0, keepdims=True)
                                   - xhat * (gc * xhat).sum(axis=0, keepdims=True))
        return (dx,)

    return _make(out, "ghost_bn", (a,), backward), stats


def cross_entropy(probs, labels, floor=1e-12):
    """Mean of -log p[label] over rows, with probabilities floored."""
    labels = np.asarray(labels, dtype=np.int64)
    n = probs.rows
    idx = np.arange(n)
    picked = probs.data[idx, labels]
    clipped = np.maximum(picked, floor)
    value = -np.log(clipped).mean()

    def backward(g):
        full = np.zeros_like(probs.data)
        full[idx, labels] = np.where(picked > floor, -1.0 / (clipped * n), 0.0)
        return (full * g[0, 0],)

    return _make(np.array([[value]]), "cross_entropy", (probs,), backward)


# ---------------------------------------------------------------------------
# gradient utilities
# ---------------------------------------------------------------------------

def zero_grads(params):
    for p in params:
        p.grad = np.zeros_like(p.data)


def grad_of(loss_fn, params):
    """Evaluate ``loss_fn()`` and accumulate its gradient into ``params``.

    Returns ``(loss_value, [grad arrays])``. Gradients add onto whatever the
    parameters already hold.
    """
    params = list(params)
    for p in params:
        if p.grad is None:
            p.grad = np.zeros_like(p.data)
    loss = loss_fn()
    if not isinstance(loss, Tensor):
        raise TypeError("loss_fn must return a Tensor")
    value = loss.item()
    if not np.isfinite(value):
        culprit = next((n for n in _topological(loss) if not np.all(np.isfinite(n.data))), loss)
        raise NumericError(f"non-finite loss, first produced by op '{culprit.op}'", op=culprit.op)
    if loss.requires_grad:
        loss.backward()
    return value, [p.grad for p in params]


def finite_diff(loss_fn, param, index, h=1e-5):
    """Central difference of the scalar ``loss_fn()`` w.r.t. ``param.data[index]``."""
    if h <= 0:
        raise ValueError("finite-difference step must be positive")
    original = param.data[index]
    try:
        param.data[index] = original + h
        up = _scalar(loss_fn())
        param.data[index] = original - h
        down = _scalar(loss_fn())
    finally:
        param.data[index] = original
    return (up - down) / (2.0 * h)


def _scalar(value):
    return value.item() if isinstance(value, Tensor) else float(value)


def gradient_check(loss_fn, params, h=1e-5, floor=1e-8, atol=0.0):
    """Largest relative error between analytic and central-difference gradients.

    The error of an entry is ``|a - n| / max(|a|, |n|, floor)``. Entries with
    ``|a - n| <= atol`` count as exact; this absorbs the rounding noise of the
    difference quotient where the true gradient is structurally zero (e.g. a
    bias whose shift a following batch norm cancels).
    """
    params = list(params)
    zero_grads(params)
    grad_of(loss_fn, params)
    analytic = [p.grad.copy() for p in params]
    worst = 0.0
    for p, ga in zip(params, analytic):
        for index in np.ndindex(p.shape):
            num = finite_diff(loss_fn, p, index, h)
            ana = ga[index]
            if abs(ana - num) <= atol:
                continue
            denom = max(abs(ana), abs(num), floor)
            worst = max(worst, abs(ana - num) / denom)
    return worst
