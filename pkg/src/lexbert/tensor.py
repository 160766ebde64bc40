"""Dense float64 tensors with reverse-mode automatic differentiation.

Every differentiable primitive records its parents and a closure mapping the
upstream gradient to one gradient per parent. ``backward`` walks the recorded
graph in reverse topological order, visiting each node exactly once.
"""

from __future__ import annotations

import contextlib
import math
from typing import Iterable, Mapping

import numpy as np
from scipy.special import erf

from .errors import ContractError, NumericError, ShapeError

PROB_FLOOR = 1e-12
LAYER_NORM_EPS = 1e-12

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference only)."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


def is_grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "op")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim and 0 in arr.shape:
            raise ShapeError(f"tensor dimensions must be >= 1, got {arr.shape}")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None
        self.op = "leaf"

    @classmethod
    def _from_op(cls, data: np.ndarray, parents: tuple[Tensor, ...], backward, op: str) -> Tensor:
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.op = op
        needs = _grad_enabled and any(p.requires_grad for p in parents)
        out.requires_grad = needs
        out._parents = parents if needs else ()
        out._backward = backward if needs else None
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op}{flag})"

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
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return index(self, key)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot broadcast {a.shape} with {b.shape}") from None


# --------------------------------------------------------------------------
# Elementwise arithmetic
# --------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor._from_op(a.data + b.data, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return Tensor._from_op(a.data - b.data, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return Tensor._from_op(a.data * b.data, (a, b), backward, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "div")

    def backward(g):
        ga = _unbroadcast(g / b.data, a.shape)
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.shape)
        return ga, gb

    return Tensor._from_op(a.data / b.data, (a, b), backward, "div")


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)

    def backward(g):
        return (g * (1.0 - y * y),)

    return Tensor._from_op(y, (x,), backward, "tanh")


_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gelu(x: Tensor) -> Tensor:
    """Exact (erf-based) GELU."""
    cdf = 0.5 * (1.0 + erf(x.data * _INV_SQRT2))

    def backward(g):
        pdf = _INV_SQRT2PI * np.exp(-0.5 * x.data * x.data)
        return (g * (cdf + x.data * pdf),)

    return Tensor._from_op(x.data * cdf, (x,), backward, "gelu")


# --------------------------------------------------------------------------
# Linear algebra and movement
# --------------------------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeError(f"matmul: incompatible batch dims {a.shape} and {b.shape}") from None

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return Tensor._from_op(np.matmul(a.data, b.data), (a, b), backward, "matmul")


def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(int(s) for s in shape)
    try:
        y = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {x.shape} as {shape}") from None

    def backward(g):
        return (g.reshape(x.shape),)

    return Tensor._from_op(y, (x,), backward, "reshape")


def transpose(x: Tensor, axes=None) -> Tensor:
    """Permute axes; with ``axes=None`` swap the last two."""
    if axes is None:
        axes = list(range(x.ndim))
        axes[-2], axes[-1] = axes[-1], axes[-2]
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))

    def backward(g):
        return (np.transpose(g, inverse),)

    return Tensor._from_op(np.transpose(x.data, axes), (x,), backward, "transpose")


def index(x: Tensor, key) -> Tensor:
    y = x.data[key]

    def backward(g):
        full = np.zeros_like(x.data)
        np.add.at(full, key, g)
        return (full,)

    return Tensor._from_op(np.array(y, dtype=np.float64), (x,), backward, "index")


def embedding(table: Tensor, ids) -> Tensor:
    """Gather rows of a 2-D ``table``; output shape is ``ids.shape + (H,)``."""
    ids = np.asarray(ids, dtype=np.int64)
    if table.ndim != 2:
        raise ShapeError(f"embedding table must be 2-D, got {table.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ContractError(
            f"embedding: ids must lie in [0, {table.shape[0]}), got range [{ids.min()}, {ids.max()}]"
        )
    width = table.shape[1]

    def backward(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, width))
        return (full,)

    return Tensor._from_op(table.data[ids], (table,), backward, "embedding")


def tsum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    y = np.sum(x.data, axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return Tensor._from_op(np.asarray(y, dtype=np.float64), (x,), backward, "sum")


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = x.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return tsum(x, axis=axis, keepdims=keepdims) * (1.0 / float(count))


# --------------------------------------------------------------------------
# Normalisation, probabilities, losses
# --------------------------------------------------------------------------

def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Numerically stable softmax; ``-inf`` logits receive exactly zero mass."""
    if np.isnan(x.data).any():
        raise NumericError("softmax: NaN in input logits")
    with np.errstate(invalid="ignore"):
        shifted = x.data - np.max(x.data, axis=axis, keepdims=True)
        e = np.exp(shifted)
        y = e / np.sum(e, axis=axis, keepdims=True)
    if np.isnan(y).any():
        raise NumericError("softmax: a row has no finite logit")

    def backward(g):
        return (y * (g - np.sum(g * y, axis=axis, keepdims=True)),)

    return Tensor._from_op(y, (x,), backward, "softmax")


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = LAYER_NORM_EPS) -> Tensor:
    """Normalise over the last axis, then scale and shift."""
    width = x.shape[-1]
    if gamma.shape != (width,) or beta.shape != (width,):
        raise ShapeError(f"layer_norm: gamma/beta {gamma.shape}/{beta.shape} vs input {x.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    out = xhat * gamma.data + beta.data
    lead = tuple(range(x.ndim - 1))

    def backward(g):
        gxhat = g * gamma.data
        gx = inv * (
            gxhat
            - gxhat.mean(axis=-1, keepdims=True)
            - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True)
        )
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return Tensor._from_op(out, (x, gamma, beta), backward, "layer_norm")


def dropout(x: Tensor, rate: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout. Identity unless ``training`` and ``rate > 0``."""
    if not training or rate <= 0.0:
        return x
    if rng is None:
        raise ContractError("dropout in training mode needs a random generator")
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)

    def backward(g):
        return (g * keep,)

    return Tensor._from_op(x.data * keep, (x,), backward, "dropout")


def cross_entropy_nll(probs: Tensor, labels, floor: float = PROB_FLOOR) -> Tensor:
    """Summed negative log-likelihood ``-sum_k ln(p_k . y_k)`` over the batch.

    ``labels`` is a constant one-hot matrix with the same shape as ``probs``.
    Probabilities at the true label are clamped at ``floor`` so the loss is
    always finite; the clamped entries pass no gradient.
    """
    y = np.asarray(labels.data if isinstance(labels, Tensor) else labels, dtype=np.float64)
    if probs.ndim != 2 or y.shape != probs.shape:
        raise ShapeError(f"cross_entropy_nll: probs {probs.shape} vs labels {y.shape}")
    if np.any(np.abs(probs.data.sum(axis=1) - 1.0) > 1e-6):
        raise ContractError("cross_entropy_nll: probability rows must sum to 1")
    if not (np.all((y == 0.0) | (y == 1.0)) and np.all(y.sum(axis=1) == 1.0)):
        raise ContractError("cross_entropy_nll: labels must be one-hot rows")
    q = np.sum(probs.data * y, axis=1)
    clamped = np.maximum(q, floor)
    loss = -np.sum(np.log(clamped))

    def backward(g):
        coef = np.where(q > floor, -1.0 / clamped, 0.0)
        return (g * coef[:, None] * y,)

    return Tensor._from_op(np.asarray(loss), (probs,), backward, "nll")


# --------------------------------------------------------------------------
# Reverse pass
# --------------------------------------------------------------------------

def topological_order(root: Tensor) -> list[Tensor]:
    """Nodes reachable from ``root`` that need gradients, inputs first."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
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


def backward(loss: Tensor, params: Mapping[str, Tensor] | Iterable[Tensor] | None = None):
    """Back-propagate from a scalar ``loss``.

    Sets ``.grad`` on every reached leaf. When ``params`` is given, returns a
    gradient for each of them (zeros for leaves the loss does not depend on):
    a dict for a mapping, otherwise a list in the same order.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    reached: set[int] = set()
    if loss.requires_grad:
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for node in reversed(topological_order(loss)):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g
                reached.add(id(node))
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = grads[key] + pg if key in grads else pg
    if params is None:
        return None
    items = params.items() if isinstance(params, Mapping) else enumerate(params)
    out = {}
    for key, p in items:
        if id(p) not in reached:
            p.grad = np.zeros_like(p.data)
        out[key] = p.grad
    return out if isinstance(params, Mapping) else [out[i] for i in range(len(out))]
