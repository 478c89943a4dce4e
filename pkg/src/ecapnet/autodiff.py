"""Minimal dense-tensor engine with reverse-mode differentiation.

Everything is float64. Tensors wrap numpy arrays and record a tape of
parent links; ``Tensor.backward()`` runs a topological sweep accumulating
gradients into ``.grad``. Only the ops this model family needs are
implemented (no general broadcasting beyond numpy's, no views).
"""

from __future__ import annotations

import numpy as np

from .errors import EmptyInput, IndexOutOfRange, ShapeMismatch


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad) or any(
            p.requires_grad for p in _parents
        )
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- autograd machinery ------------------------------------------------

    def backward(self):
        if self.data.size != 1:
            raise ShapeMismatch("backward() requires a scalar output")
        topo, seen = [], set()

        def visit(t):
            if id(t) in seen:
                return
            seen.add(id(t))
            for p in t._parents:
                visit(p)
            topo.append(t)

        visit(self)
        for t in topo:
            t.grad = None
        self.grad = np.ones_like(self.data)
        for t in reversed(topo):
            if t._backward is not None and t.grad is not None:
                t._backward(t.grad)

    def _accum(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64)
        else:
            self.grad = self.grad + g

    # -- operators ---------------------------------------------------------

    def __add__(self, other):
        return add(self, _wrap(other))

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, mul(_wrap(other), -1.0))

    def __rsub__(self, other):
        return add(_wrap(other), mul(self, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return mul(self, power(other, -1.0))
        return mul(self, 1.0 / other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None):
        return tsum(self, axis)

    def mean(self, axis=None):
        return tmean(self, axis)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


class Parameter(Tensor):
    """Trainable tensor with a stable name used in checkpoints."""

    __slots__ = ("name",)

    def __init__(self, data, name: str):
        super().__init__(data, requires_grad=True)
        self.name = name


# -- primitive ops ---------------------------------------------------------


def add(a: Tensor, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = Tensor(a.data + b.data, _parents=(a, b))

    def bw(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(g, b.data.shape))

    out._backward = bw
    return out


def mul(a: Tensor, b) -> Tensor:
    a = _wrap(a)
    if not isinstance(b, Tensor):
        bv = np.asarray(b, dtype=np.float64)
        out = Tensor(a.data * bv, _parents=(a,))

        def bw_const(g):
            if a.requires_grad:
                a._accum(_unbroadcast(g * bv, a.data.shape))

        out._backward = bw_const
        return out
    out = Tensor(a.data * b.data, _parents=(a, b))

    def bw(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(g * a.data, b.data.shape))

    out._backward = bw
    return out


def power(a: Tensor, exponent: float) -> Tensor:
    out = Tensor(a.data**exponent, _parents=(a,))

    def bw(g):
        if a.requires_grad:
            a._accum(g * exponent * a.data ** (exponent - 1.0))

    out._backward = bw
    return out


def texp(a: Tensor) -> Tensor:
    out = Tensor(np.exp(a.data), _parents=(a,))

    def bw(g):
        if a.requires_grad:
            a._accum(g * out.data)

    out._backward = bw
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape[-1] != b.data.shape[0]:
        raise ShapeMismatch(f"matmul {a.data.shape} @ {b.data.shape}")
    out = Tensor(a.data @ b.data, _parents=(a, b))

    def bw(g):
        if a.requires_grad:
            a._accum(g @ b.data.T)
        if b.requires_grad:
            b._accum(a.data.T @ g)

    out._backward = bw
    return out


def tsum(a: Tensor, axis=None) -> Tensor:
    out = Tensor(a.data.sum(axis=axis), _parents=(a,))

    def bw(g):
        if not a.requires_grad:
            return
        if axis is None:
            a._accum(np.full(a.data.shape, g))
        else:
            a._accum(np.broadcast_to(np.expand_dims(g, axis), a.data.shape).copy())

    out._backward = bw
    return out


def tmean(a: Tensor, axis=None) -> Tensor:
    n = a.data.size if axis is None else a.data.shape[axis]
    if n == 0:
        raise EmptyInput("mean of empty tensor")
    return mul(tsum(a, axis), 1.0 / n)


def tabs(a: Tensor) -> Tensor:
    out = Tensor(np.abs(a.data), _parents=(a,))

    def bw(g):
        if a.requires_grad:
            a._accum(g * np.sign(a.data))

    out._backward = bw
    return out


def concat(tensors: list, axis: int = 1) -> Tensor:
    if not tensors:
        raise EmptyInput("concat of empty list")
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis),
                 _parents=tuple(tensors))
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
            if t.requires_grad:
                t._accum(piece)

    out._backward = bw
    return out


def rows(a: Tensor, index: np.ndarray) -> Tensor:
    """Gather rows a[index]; scatter-adds the gradient back."""
    out = Tensor(a.data[index], _parents=(a,))

    def bw(g):
        if a.requires_grad:
            acc = np.zeros_like(a.data)
            np.add.at(acc, index, g)
            a._accum(acc)

    out._backward = bw
    return out


def scatter_mean(values: Tensor, index: np.ndarray, n_nodes: int) -> Tensor:
    """Row i of the output = mean of value rows with index i (zeros if none)."""
    index = np.asarray(index)
    if values.data.ndim != 2:
        raise ShapeMismatch("scatter_mean expects 2-D values")
    if index.shape[0] != values.data.shape[0]:
        raise ShapeMismatch("index length must match number of value rows")
    if index.size and (index.min() < 0 or index.max() >= n_nodes):
        raise IndexOutOfRange(f"index outside [0, {n_nodes})")
    counts = np.bincount(index, minlength=n_nodes).astype(np.float64)
    denom = np.maximum(counts, 1.0)
    acc = np.zeros((n_nodes, values.data.shape[1]))
    for c in range(values.data.shape[1]):
        acc[:, c] = np.bincount(index, weights=values.data[:, c],
                                minlength=n_nodes)
    out = Tensor(acc / denom[:, None], _parents=(values,))

    def bw(g):
        if values.requires_grad:
            values._accum(g[index] / denom[index, None])

    out._backward = bw
    return out


def elu(a: Tensor) -> Tensor:
    pos = a.data > 0
    y = np.where(pos, a.data, np.expm1(a.data))
    out = Tensor(y, _parents=(a,))

    def bw(g):
        if a.requires_grad:
            a._accum(g * np.where(pos, 1.0, y + 1.0))

    out._backward = bw
    return out


def dropout(a: Tensor, p: float, training: bool, rng: np.random.Generator) -> Tensor:
    if not 0.0 <= p < 1.0:
        raise ShapeMismatch("dropout p must be in [0, 1)")
    if not training or p == 0.0:
        return a
    mask = (rng.random(a.data.shape) >= p) / (1.0 - p)
    out = Tensor(a.data * mask, _parents=(a,))

    def bw(g):
        if a.requires_grad:
            a._accum(g * mask)

    out._backward = bw
    return out


def l1_loss(pred: Tensor, target: Tensor) -> Tensor:
    if pred.data.size == 0:
        raise EmptyInput("l1_loss on empty tensors")
    if pred.data.shape != target.data.shape:
        raise ShapeMismatch(f"l1_loss {pred.data.shape} vs {target.data.shape}")
    return tmean(tabs(add(pred, mul(target, -1.0))))


# -- batch norm ------------------------------------------------------------


class BatchNorm:
    """Per-channel batch normalization over all rows of a 2-D activation.

    Training mode normalizes with batch statistics and updates running
    stats with momentum 0.1; eval mode uses the running stats.
    """

    def __init__(self, n_channels: int, name: str, eps: float = 1e-5,
                 momentum: float = 0.1):
        self.gamma = Parameter(np.ones(n_channels), f"{name}.gamma")
        self.beta = Parameter(np.zeros(n_channels), f"{name}.beta")
        self.running_mean = np.zeros(n_channels)
        self.running_var = np.ones(n_channels)
        self.eps = eps
        self.momentum = momentum

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        if training:
            mu = tmean(x, axis=0)
            xc = add(x, mul(mu, -1.0))
            var = tmean(mul(xc, xc), axis=0)
            self.running_mean = ((1 - self.momentum) * self.running_mean
                                 + self.momentum * mu.data)
            self.running_var = ((1 - self.momentum) * self.running_var
                                + self.momentum * var.data)
            inv = power(add(var, self.eps), -0.5)
            return add(mul(mul(xc, inv), self.gamma), self.beta)
        inv = 1.0 / np.sqrt(self.running_var + self.eps)
        xc = add(x, -self.running_mean)
        return add(mul(xc, Tensor(inv) * self.gamma), self.beta)

    def parameters(self):
        return [self.gamma, self.beta]

    def state_arrays(self):
        return [("running_mean", self.running_mean),
                ("running_var", self.running_var)]


# -- optimizer -------------------------------------------------------------


class Adam:
    """Bias-corrected Adam with classic L2-into-gradient weight decay."""

    def __init__(self, params, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8,
                 weight_decay=0.0):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for i, p in enumerate(self.params):
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            if self.weight_decay:
                g = g + self.weight_decay * p.data
            self.m[i] = b1 * self.m[i] + (1 - b1) * g
            self.v[i] = b2 * self.v[i] + (1 - b2) * g * g
            mhat = self.m[i] / (1 - b1**self.t)
            vhat = self.v[i] / (1 - b2**self.t)
            p.data = p.data - self.lr * mhat / (np.sqrt(vhat) + self.eps)

    def zero_grad(self):
        for p in self.params:
            p.grad = None


# -- verification ----------------------------------------------------------


def grad_check(f, x: Tensor, h: float = 1e-5) -> float:
    """Max relative error between reverse-mode and central finite differences.

    `f` must map the tensor to a scalar Tensor and be re-evaluable (pure).
    """
    x.requires_grad = True
    out = f(x)
    out.backward()
    analytic = np.array(x.grad, dtype=np.float64).ravel()
    flat = x.data.ravel()
    numeric = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(f(x).data)
        flat[i] = orig - h
        fm = float(f(x).data)
        flat[i] = orig
        numeric[i] = (fp - fm) / (2 * h)
    denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric) / denom))
