"""Dense float64 tensors with tape-based reverse-mode automatic differentiation.

Every value is a :class:`Tensor` wrapping a C-contiguous ``numpy`` float64
array. Operations record a node on an implicit tape (parent links plus a
backward closure); :meth:`Tensor.backward` walks the recorded graph once in
reverse topological order. Graphs are rebuilt from scratch on every forward
pass, so there is no global state to reset between training steps.

Only first-order gradients are supported. Everything runs at 64-bit
precision; the engine favours verifiability over speed.
"""

from __future__ import annotations

import contextlib
import math
from dataclasses import dataclass

import numpy as np

from .errors import VocabularyError, ShapeError, TrainingError, UsageError

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference passes)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` over the axes numpy broadcast to reach its shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    keep = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if keep:
        grad = grad.sum(axis=keep, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A dense float64 array, optionally tracked for gradients.

    ``grad`` is populated (and accumulated across backward calls) only for
    tensors created with ``requires_grad=True``; intermediate results of the
    graph receive a fresh gradient on each backward pass.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_op")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _backward=None, _op="leaf"):
        arr = np.asarray(data, dtype=np.float64)
        if not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = _parents
        self._backward = _backward
        self._op = _op

    # -- construction helpers -------------------------------------------------

    @staticmethod
    def zeros(shape, requires_grad: bool = False) -> "Tensor":
        return Tensor(np.zeros(shape), requires_grad=requires_grad)

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise UsageError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self._op}, requires_grad={self.requires_grad})"

    # -- graph plumbing --------------------------------------------------------

    def backward(self) -> None:
        """Accumulate d(self)/d(input) into every requires_grad graph input.

        `self` must be scalar. Gradients are retained on graph inputs (tensors
        without parents, e.g. parameters); repeated calls accumulate until
        :meth:`zero_grad`. Interior nodes only carry gradients transiently.
        """
        if self.data.size != 1:
            raise UsageError(f"backward() requires a scalar loss, got shape {self.shape}")

        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen and (p._parents or p.requires_grad):
                    stack.append((p, False))

        # Backward rules may return arrays aliasing their input gradient (or
        # hand the same array to two parents), so accumulators track whether
        # they own their buffer; borrowed buffers are copied before mutation.
        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        owned: set[int] = {id(self)}
        for node in reversed(topo):
            gout = grads.pop(id(node), None)
            if gout is None:
                continue
            node_owned = id(node) in owned
            owned.discard(id(node))
            if node._backward is None:
                if node.requires_grad:
                    if node.grad is None:
                        self_grad = gout if node_owned else gout.copy()
                        node.grad = np.ascontiguousarray(self_grad)
                    else:
                        node.grad += gout
                continue
            for parent, pgrad in zip(node._parents, node._backward(gout)):
                if pgrad is None or not (parent._parents or parent.requires_grad):
                    continue
                pid = id(parent)
                acc = grads.get(pid)
                if acc is None:
                    grads[pid] = pgrad
                elif pid in owned:
                    acc += pgrad
                else:
                    grads[pid] = acc + pgrad
                    owned.add(pid)

    # -- arithmetic ------------------------------------------------------------

    def __add__(self, other):
        return add(self, _as_tensor(other))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, _as_tensor(other))

    def __rtruediv__(self, other):
        return div(_as_tensor(other), self)

    def __neg__(self):
        return mul(self, _as_tensor(-1.0))

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return take(self, key)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward, op) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
        out._op = op
    return out


# -- elementwise and reduction ops ----------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    data = a.data + b.data
    return _make(data, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    data = a.data - b.data
    return _make(data, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)), "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data * b.data
    return _make(
        data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
        "mul",
    )


def div(a: Tensor, b: Tensor) -> Tensor:
    data = a.data / b.data
    return _make(
        data,
        (a, b),
        lambda g: (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        ),
        "div",
    )


def square(a: Tensor) -> Tensor:
    return _make(a.data * a.data, (a,), lambda g: (2.0 * a.data * g,), "square")


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,), "exp")


def log(a: Tensor) -> Tensor:
    return _make(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)
    return _make(out, (a,), lambda g: (g / (2.0 * out),), "sqrt")


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _make(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,), "relu")


def softplus(a: Tensor) -> Tensor:
    # log(1 + e^x), computed without overflow for large |x|
    out = np.maximum(a.data, 0.0) + np.log1p(np.exp(-np.abs(a.data)))
    sig = 1.0 / (1.0 + np.exp(-a.data))
    return _make(out, (a,), lambda g: (g * sig,), "softplus")


def clamp_min(a: Tensor, floor: float) -> Tensor:
    """max(a, floor) elementwise; gradient is zero strictly below the floor."""
    mask = a.data >= floor
    return _make(np.where(mask, a.data, floor), (a,), lambda g: (g * mask,), "clamp_min")


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, a.shape).copy(),)

    return _make(data, (a,), backward, "sum")


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        n = a.data.size
    else:
        n = a.data.shape[axis]
    return mul(tsum(a, axis=axis, keepdims=keepdims), _as_tensor(1.0 / n))


def reshape(a: Tensor, shape) -> Tensor:
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),), "reshape")


def transpose(a: Tensor, axes) -> Tensor:
    inv = np.argsort(axes)
    return _make(
        np.ascontiguousarray(a.data.transpose(axes)),
        (a,),
        lambda g: (np.ascontiguousarray(g.transpose(inv)),),
        "transpose",
    )


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, splits, axis=axis))

    return _make(data, tuple(tensors), backward, "concat")


def take(a: Tensor, key) -> Tensor:
    """Basic or integer-array indexing with scatter-add backward."""
    data = a.data[key]

    def backward(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, key, g)
        return (ga,)

    return _make(np.ascontiguousarray(data), (a,), backward, "take")


def broadcast_to(a: Tensor, shape) -> Tensor:
    data = np.broadcast_to(a.data, shape).copy()
    return _make(data, (a,), lambda g: (_unbroadcast(g, a.shape),), "broadcast_to")


# -- linear algebra ---------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes, broadcasting leading axes."""
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError(f"matmul needs >=2-d operands, got {a.shape} @ {b.shape}")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} @ {b.shape}")
    try:
        data = np.matmul(a.data, b.data)
    except ValueError as e:  # non-broadcastable leading dims
        raise ShapeError(f"matmul batch dimensions incompatible: {a.shape} @ {b.shape}") from e

    def backward(g):
        ga = _unbroadcast(np.matmul(g, b.data.swapaxes(-1, -2)), a.shape)
        gb = _unbroadcast(np.matmul(a.data.swapaxes(-1, -2), g), b.shape)
        return ga, gb

    return _make(data, (a, b), backward, "matmul")


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Numerically-stable softmax along `axis` (max subtraction)."""
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - dot),)

    return _make(out, (a,), backward, "softmax")


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then scale and shift."""
    from .errors import ConfigurationError

    if eps <= 0:
        raise ConfigurationError(f"layer_norm eps must be positive, got {eps}")
    n = x.data.shape[-1]
    if gamma.data.shape != (n,) or beta.data.shape != (n,):
        raise ShapeError(
            f"layer_norm affine parameters must have shape ({n},), got {gamma.shape} and {beta.shape}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = gamma.data * xhat + beta.data

    def backward(g):
        reduce_axes = tuple(range(g.ndim - 1))
        dgamma = (g * xhat).sum(axis=reduce_axes) if reduce_axes else g * xhat
        dbeta = g.sum(axis=reduce_axes) if reduce_axes else g.copy()
        dxhat = g * gamma.data
        m1 = dxhat.mean(axis=-1, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
        dx = inv * (dxhat - m1 - xhat * m2)
        return dx, dgamma, dbeta

    return _make(out, (x, gamma, beta), backward, "layer_norm")


def dropout(x: Tensor, p: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout: zero with probability p and scale survivors by 1/(1-p).

    Eval mode (training=False) and p=0 are exact identities.
    """
    if not 0.0 <= p < 1.0:
        from .errors import ConfigurationError

        raise ConfigurationError(f"dropout rate must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    if rng is None:
        raise UsageError("dropout in training mode needs an explicit rng")
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return _make(x.data * mask, (x,), lambda g: (g * mask,), "dropout")


def embedding_lookup(table: Tensor, indices: np.ndarray, column: str = "") -> Tensor:
    """Gather rows of a learnable table; backward scatter-adds into it."""
    idx = np.asarray(indices)
    if idx.size and (idx.min() < 0 or idx.max() >= table.data.shape[0]):
        bad = int(idx.min()) if idx.min() < 0 else int(idx.max())
        raise VocabularyError(
            f"embedding index {bad} out of range for column {column!r} "
            f"(vocabulary size {table.data.shape[0]})"
        )
    data = table.data[idx]

    def backward(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, idx, g)
        return (gt,)

    return _make(np.ascontiguousarray(data), (table,), backward, "embedding_lookup")


# -- optimizer --------------------------------------------------------------------


@dataclass
class AdamState:
    """Per-parameter Adam accumulators."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


class Adam:
    """Standard Adam with bias correction over a fixed parameter list."""

    def __init__(self, params: list[Tensor], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.states = [
            AdamState(m=np.zeros_like(p.data), v=np.zeros_like(p.data),
                      lr=lr, beta1=beta1, beta2=beta2, eps=eps)
            for p in self.params
        ]

    def step(self) -> None:
        for p, s in zip(self.params, self.states):
            g = p.grad
            if g is None:
                continue
            if not np.all(np.isfinite(g)):
                raise TrainingError(f"non-finite gradient at optimizer step {s.t + 1}")
            s.t += 1
            # in-place update: p -= lr * mhat / (sqrt(vhat) + eps), with
            # mhat = m/(1-b1^t) and sqrt(vhat) = sqrt(v)/sqrt(1-b2^t)
            np.multiply(s.m, s.beta1, out=s.m)
            s.m += g * (1.0 - s.beta1)
            np.multiply(s.v, s.beta2, out=s.v)
            g2 = g * g
            g2 *= 1.0 - s.beta2
            s.v += g2
            c1 = 1.0 - s.beta1 ** s.t
            c2 = 1.0 - s.beta2 ** s.t
            denom = np.sqrt(s.v)
            denom *= 1.0 / math.sqrt(c2)
            denom += s.eps
            np.divide(s.m, denom, out=denom)
            denom *= s.lr / c1
            p.data -= denom

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


def adam_step(params: list[Tensor], optimizer: Adam) -> None:
    """Thin functional wrapper kept for symmetry with the rest of the API."""
    assert params is optimizer.params or list(params) == optimizer.params
    optimizer.step()
