"""Dense float64 tensors with reverse-mode automatic differentiation.

Each :class:`Tensor` produced by an operation keeps a reference to its
inputs and a closure that maps the output gradient to input gradients.
:meth:`Tensor.backward` walks the graph in reverse topological order and
accumulates into ``grad``.

Only the operations needed by the models in this package are provided.
Broadcasting is limited to the bias pattern (a trailing-dimension vector
added to a matrix); anything else raises.
"""
from __future__ import annotations

import math
from typing import Callable, Iterable, Sequence

import numpy as np

from . import kernels

# lower clamp applied to every argument of log() in the stack
LOG_EPS = 1e-7


class Tensor:
    """A float64 array with a gradient slot and an optional producer node."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        _parents: tuple = (),
        _backward: Callable | None = None,
        op: str = "",
    ):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(())
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(arr) if requires_grad else None
        self._parents = _parents
        self._backward = _backward
        self.op = op

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError("item() needs a single-element tensor")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad.fill(0.0)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op or 'leaf'})"

    # -- graph traversal --------------------------------------------------
    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into every reachable leaf's ``grad``."""
        if self.data.size != 1:
            raise ValueError(f"backward() needs a scalar, got shape {self.shape}")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
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
                if id(p) not in seen and _tracks(p):
                    stack.append((p, False))

        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.requires_grad:
                    node.grad += g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not _tracks(parent):
                    continue
                if id(parent) in grads:
                    grads[id(parent)] = grads[id(parent)] + pg
                else:
                    grads[id(parent)] = pg

    # -- operator sugar ---------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(_as_tensor(other)))

    def __rsub__(self, other):
        return add(_as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self) -> "Tensor":
        return transpose(self)


def _tracks(t: Tensor) -> bool:
    return t.requires_grad or t._backward is not None


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data, parents: Sequence[Tensor], backward, op: str) -> Tensor:
    if any(_tracks(p) for p in parents):
        return Tensor(data, _parents=tuple(parents), _backward=backward, op=op)
    return Tensor(data, op=op)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    lead = g.ndim - len(shape)
    if lead:
        g = g.sum(axis=tuple(range(lead)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _check_bias_shapes(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape == b.shape or a.ndim == 0 or b.ndim == 0:
        return
    small, big = (a, b) if a.ndim <= b.ndim else (b, a)
    if big.shape[big.ndim - small.ndim:] == small.shape:
        return
    if small.ndim == big.ndim and all(s in (1, t) for s, t in zip(small.shape, big.shape)):
        return
    raise ValueError(f"unsupported broadcast between {a.shape} and {b.shape}")


# -- elementwise ---------------------------------------------------------
def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_bias_shapes(a.data, b.data)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _result(a.data + b.data, (a, b), backward, "add")


def neg(a: Tensor) -> Tensor:
    return _result(-a.data, (a,), lambda g: (-g,), "neg")


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_bias_shapes(a.data, b.data)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _result(a.data * b.data, (a, b), backward, "mul")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _result(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,), "relu")


def sigmoid(x: Tensor) -> Tensor:
    """Logistic function, output clamped to ``[LOG_EPS, 1 - LOG_EPS]``.

    The gradient is the derivative of the clamped function, so it is zero
    wherever the clamp is active.
    """
    z = x.data
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    clamped = np.clip(out, LOG_EPS, 1.0 - LOG_EPS)
    live = (out > LOG_EPS) & (out < 1.0 - LOG_EPS)

    def backward(g):
        return (g * out * (1.0 - out) * live,)

    return _result(clamped, (x,), backward, "sigmoid")


def log(x: Tensor) -> Tensor:
    """Natural log of ``max(x, LOG_EPS)``."""
    safe = np.maximum(x.data, LOG_EPS)
    live = x.data >= LOG_EPS
    return _result(np.log(safe), (x,), lambda g: (g * live / safe,), "log")


def square(x: Tensor) -> Tensor:
    return _result(x.data * x.data, (x,), lambda g: (2.0 * g * x.data,), "square")


def scale(x: Tensor, c: float) -> Tensor:
    return _result(x.data * c, (x,), lambda g: (g * c,), "scale")


# -- reductions and shape ------------------------------------------------
def sum_(x: Tensor, axis: int | None = None) -> Tensor:
    shape = x.shape

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return _result(x.data.sum(axis=axis), (x,), backward, "sum")


def mean(x: Tensor, axis: int | None = None) -> Tensor:
    n = x.size if axis is None else x.shape[axis]
    return scale(sum_(x, axis), 1.0 / n)


def reshape(x: Tensor, shape: tuple) -> Tensor:
    old = x.shape
    return _result(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),), "reshape")


def transpose(x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise ValueError("transpose expects a matrix")
    return _result(x.data.T.copy(), (x,), lambda g: (g.T.copy(),), "transpose")


def diagonal(x: Tensor) -> Tensor:
    n = x.shape[0]

    def backward(g):
        out = np.zeros((n, n))
        out[np.arange(n), np.arange(n)] = g
        return (out,)

    return _result(np.diagonal(x.data).copy(), (x,), backward, "diagonal")


def take_rows(x: Tensor, rows: np.ndarray) -> Tensor:
    """Select rows ``x[rows]`` (rows may repeat)."""
    rows = np.asarray(rows, dtype=np.intp)

    def backward(g):
        out = np.zeros_like(x.data)
        np.add.at(out, rows, g)
        return (out,)

    return _result(x.data[rows], (x,), backward, "take_rows")


def permute_columns(x: Tensor, perms: np.ndarray) -> Tensor:
    """Column-wise gather: ``out[k, j] = x[perms[k, j], j]``.

    With one permutation per column this is the marginal-product resampling
    used by the JS estimators, kept differentiable so the classifier sees
    gradients through both the joint and the shuffled batch.
    """
    perms = np.asarray(perms, dtype=np.intp)
    cols = np.broadcast_to(np.arange(x.shape[1]), perms.shape)
    out = x.data[perms, cols]

    def backward(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, (perms, cols), g)
        return (gx,)

    return _result(out, (x,), backward, "permute_columns")


# -- linear algebra ------------------------------------------------------
def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch {a.shape} @ {b.shape}")

    def backward(g):
        return g @ b.data.T, a.data.T @ g

    return _result(a.data @ b.data, (a, b), backward, "matmul")


def softmax_cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of ``labels`` under ``softmax(logits)``."""
    labels = np.asarray(labels, dtype=np.intp)
    K, C = logits.shape
    if C < 2:
        raise ValueError("need at least two classes")
    if labels.shape != (K,):
        raise ValueError(f"expected {K} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= C):
        raise ValueError(f"label out of range [0, {C})")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(z).sum(axis=1))
    logp = z - logsumexp[:, None]
    loss = -logp[np.arange(K), labels].mean()

    def backward(g):
        p = np.exp(logp)
        p[np.arange(K), labels] -= 1.0
        return (g * p / K,)

    return _result(loss, (logits,), backward, "softmax_xent")


def dropout(x: Tensor, rate: float, rng: np.random.Generator, training: bool = True) -> Tensor:
    """Inverted dropout: zero with probability ``rate``, rescale survivors."""
    if not training or rate <= 0.0:
        return x
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return _result(x.data * keep, (x,), lambda g: (g * keep,), "dropout")


# -- convolution ---------------------------------------------------------
def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Stride-1 valid convolution (cross-correlation).

    ``x`` is ``(N, C, H, W)``, ``w`` is ``(F, C, kh, kw)``; output is
    ``(N, F, H - kh + 1, W - kw + 1)``.
    """
    if x.data.ndim != 4 or w.data.ndim != 4 or x.shape[1] != w.shape[1]:
        raise ValueError(f"conv2d shape mismatch {x.shape} * {w.shape}")
    out = kernels.conv2d_forward(x.data, w.data)
    parents = (x, w) if b is None else (x, w, b)
    if b is not None:
        out = out + b.data[None, :, None, None]

    def backward(g):
        gx, gw = kernels.conv2d_backward(x.data, w.data, g)
        if b is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2, 3))

    return _result(out, parents, backward, "conv2d")


def maxpool2d(x: Tensor) -> Tensor:
    """2x2 max-pool with stride 2; odd trailing rows/columns are dropped."""
    if x.data.ndim != 4:
        raise ValueError("maxpool2d expects (N, C, H, W)")
    out, argmax = kernels.maxpool2d_forward(x.data)
    shape = x.shape

    def backward(g):
        return (kernels.maxpool2d_backward(g, argmax, shape),)

    return _result(out, (x,), backward, "maxpool2d")


def js_objective(joint: Tensor, shuffled: Tensor, w1: Tensor, b1: Tensor, w2: Tensor, b2: Tensor) -> Tensor:
    """Fused ``mean log s(T(joint)) + mean log(1 - s(T(shuffled)))``.

    ``T(x) = relu(x @ w1 + b1) @ w2 + b2`` and ``s`` is the clamped sigmoid.
    Equivalent to composing :func:`relu`, :func:`matmul`, :func:`sigmoid`
    and :func:`log`, but evaluated in a single compiled pass.
    """
    obj, grads = kernels.js_objective(joint.data, shuffled.data, w1.data, b1.data, w2.data, b2.data)

    def backward(g):
        gv = float(g)
        return tuple(gv * a.reshape(t.shape) for a, t in zip(grads, (joint, shuffled, w1, b1, w2, b2)))

    return _result(np.float64(obj), (joint, shuffled, w1, b1, w2, b2), backward, "js_objective")


def parameters_of(tensors: Iterable[Tensor]) -> list[Tensor]:
    return [t for t in tensors if t.requires_grad]


LN2 = math.log(2.0)
