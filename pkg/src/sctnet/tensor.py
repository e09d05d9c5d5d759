"""Dense tensor kernels with hand-written backward passes.

Tensors are plain numpy arrays. Every differentiable kernel exists in two
forms: a stateless function (``matmul``, ``softmax`` ...) for inference,
and an :class:`Op` subclass that records what it needs during ``forward``
so that ``backward`` can map an upstream gradient to gradients of every
input. A fresh op instance is used for each application.
"""
from __future__ import annotations

import contextlib
import math
from collections import defaultdict

import numpy as np
from scipy.special import erf

LN_EPS = 1e-5


class ShapeError(ValueError):
    """Operand extents do not fit together."""


class UsageError(RuntimeError):
    """An op was driven in the wrong order (e.g. backward before forward)."""


# --------------------------------------------------------------------------
# multiply-accumulate instrumentation

_counters: list["MacCounter"] = []


class MacCounter:
    """Counts scalar multiply-accumulates performed by :func:`matmul`.

    Usage::

        with MacCounter() as mc:
            model.forward(x)
        mc.counts["cmca.scores"]
    """

    def __init__(self):
        self.counts: dict[str, int] = defaultdict(int)

    def __enter__(self):
        _counters.append(self)
        return self

    def __exit__(self, *exc):
        _counters.remove(self)
        return False

    @property
    def total(self) -> int:
        return sum(self.counts.values())


def _record(tag: str | None, n: int) -> None:
    for c in _counters:
        c.counts[tag or "untagged"] += n


# --------------------------------------------------------------------------
# forward kernels


def matmul(a: np.ndarray, b: np.ndarray, tag: str | None = None) -> np.ndarray:
    """Matrix product over the last two axes; leading axes broadcast."""
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    out = np.matmul(a, b)
    if _counters:
        _record(tag, int(np.prod(out.shape)) * a.shape[-1])
    return out


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    if not -x.ndim <= axis < x.ndim:
        raise ShapeError(f"softmax: axis {axis} out of range for shape {x.shape}")
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def layernorm(x, gamma, beta, eps: float = LN_EPS):
    """Normalize over the last axis, then scale and shift."""
    if gamma.shape != (x.shape[-1],) or beta.shape != (x.shape[-1],):
        raise ShapeError(
            f"layernorm: gamma {gamma.shape}/beta {beta.shape} vs embedding {x.shape[-1]}")
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * gamma + beta


def gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + erf(x / math.sqrt(2.0)))


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _im2col(x: np.ndarray, k: int, pad: int, stride: int):
    c, h, w = x.shape
    hp, wp = h + 2 * pad, w + 2 * pad
    if k > hp or k > wp:
        raise ShapeError(f"conv2d: kernel {k}x{k} larger than padded input {hp}x{wp}")
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad))) if pad else x
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(1, 2))
    win = win[:, ::stride, ::stride]  # C x Ho x Wo x k x k
    ho, wo = win.shape[1], win.shape[2]
    cols = win.transpose(1, 2, 0, 3, 4).reshape(ho * wo, c * k * k)
    return cols, ho, wo


def conv2d(x, w, b, pad: int = 0, stride: int = 1, tag: str | None = "conv"):
    """Cross-correlation of a ``C_in x H x W`` map with ``C_out x C_in x k x k`` kernels."""
    if x.ndim != 3 or w.ndim != 4 or w.shape[1] != x.shape[0] or w.shape[2] != w.shape[3]:
        raise ShapeError(f"conv2d: input {x.shape} incompatible with kernel {w.shape}")
    cols, ho, wo = _im2col(x, w.shape[2], pad, stride)
    out = matmul(w.reshape(w.shape[0], -1), cols.T, tag=tag)
    return (out + b[:, None]).reshape(w.shape[0], ho, wo)


def linear(x, w, b, tag: str | None = None):
    """Token-major affine map ``x @ w + b`` with ``w`` stored as (in, out)."""
    return matmul(x, w, tag=tag) + b


def mlp(x, w1, b1, w2, b2, tag: str | None = "mlp"):
    """Point-wise two-layer perceptron ``gelu(x W1 + b1) W2 + b2``."""
    return linear(gelu(linear(x, w1, b1, tag)), w2, b2, tag)


# --------------------------------------------------------------------------
# differentiable ops


class Op:
    """A kernel application that remembers its inputs for ``backward``."""

    _cache = None

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError

    def _saved(self):
        if self._cache is None:
            raise UsageError(f"{type(self).__name__}.backward called without a recorded forward")
        return self._cache


class MatMul(Op):
    def __init__(self, tag: str | None = None):
        self.tag = tag

    def forward(self, a, b):
        out = matmul(a, b, self.tag)
        self._cache = (a, b)
        return out

    def backward(self, grad):
        a, b = self._saved()
        da = np.matmul(grad, np.swapaxes(b, -1, -2))
        db = np.matmul(np.swapaxes(a, -1, -2), grad)
        return _unbroadcast(da, a.shape), _unbroadcast(db, b.shape)


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


class Linear(Op):
    """``x @ w + b`` over the last axis of ``x``; returns (dx, dw, db)."""

    def __init__(self, tag: str | None = None):
        self.tag = tag

    def forward(self, x, w, b):
        self._cache = (x, w)
        return linear(x, w, b, self.tag)

    def backward(self, grad):
        x, w = self._saved()
        dx = grad @ w.T
        x2 = x.reshape(-1, x.shape[-1])
        g2 = grad.reshape(-1, grad.shape[-1])
        return dx, x2.T @ g2, g2.sum(axis=0)


class Softmax(Op):
    def __init__(self, axis: int = -1):
        self.axis = axis

    def forward(self, x):
        y = softmax(x, self.axis)
        self._cache = y
        return y

    def backward(self, grad):
        y = self._saved()
        return y * (grad - (grad * y).sum(axis=self.axis, keepdims=True))


class LayerNorm(Op):
    def __init__(self, eps: float = LN_EPS):
        self.eps = eps

    def forward(self, x, gamma, beta):
        if gamma.shape != (x.shape[-1],) or beta.shape != (x.shape[-1],):
            raise ShapeError(
                f"layernorm: gamma {gamma.shape}/beta {beta.shape} vs embedding {x.shape[-1]}")
        mu = x.mean(axis=-1, keepdims=True)
        inv = 1.0 / np.sqrt(x.var(axis=-1, keepdims=True) + self.eps)
        xhat = (x - mu) * inv
        self._cache = (xhat, inv, gamma)
        return xhat * gamma + beta

    def backward(self, grad):
        xhat, inv, gamma = self._saved()
        c = xhat.shape[-1]
        g2 = grad.reshape(-1, c)
        dgamma = (g2 * xhat.reshape(-1, c)).sum(axis=0)
        dbeta = g2.sum(axis=0)
        dxhat = grad * gamma
        dx = inv / c * (c * dxhat - dxhat.sum(axis=-1, keepdims=True)
                        - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True))
        return dx, dgamma, dbeta


class Gelu(Op):
    def forward(self, x):
        self._cache = x
        return gelu(x)

    def backward(self, grad):
        x = self._saved()
        cdf = 0.5 * (1.0 + erf(x / math.sqrt(2.0)))
        pdf = np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
        return grad * (cdf + x * pdf)


class Sigmoid(Op):
    def forward(self, x):
        y = sigmoid(x)
        self._cache = y
        return y

    def backward(self, grad):
        y = self._saved()
        return grad * y * (1.0 - y)


class Mlp(Op):
    """Returns (dx, dw1, db1, dw2, db2)."""

    def __init__(self, tag: str | None = "mlp"):
        self.fc1, self.act, self.fc2 = Linear(tag), Gelu(), Linear(tag)

    def forward(self, x, w1, b1, w2, b2):
        self._cache = True
        return self.fc2(self.act(self.fc1(x, w1, b1)), w2, b2)

    def backward(self, grad):
        self._saved()
        dh, dw2, db2 = self.fc2.backward(grad)
        dx, dw1, db1 = self.fc1.backward(self.act.backward(dh))
        return dx, dw1, db1, dw2, db2


class Conv2d(Op):
    """Returns (dx, dw, db)."""

    def __init__(self, pad: int = 0, stride: int = 1, tag: str | None = "conv"):
        self.pad, self.stride, self.tag = pad, stride, tag

    def forward(self, x, w, b):
        if x.ndim != 3 or w.ndim != 4 or w.shape[1] != x.shape[0] or w.shape[2] != w.shape[3]:
            raise ShapeError(f"conv2d: input {x.shape} incompatible with kernel {w.shape}")
        cols, ho, wo = _im2col(x, w.shape[2], self.pad, self.stride)
        out = matmul(w.reshape(w.shape[0], -1), cols.T, tag=self.tag)
        self._cache = (x.shape, cols, w, ho, wo)
        return (out + b[:, None]).reshape(w.shape[0], ho, wo)

    def backward(self, grad):
        xshape, cols, w, ho, wo = self._saved()
        cout, cin, k, _ = w.shape
        g = grad.reshape(cout, ho * wo)
        dw = (g @ cols).reshape(w.shape)
        db = g.sum(axis=1)
        dcols = (w.reshape(cout, -1).T @ g).reshape(cin, k, k, ho, wo)
        p, s = self.pad, self.stride
        dxp = np.zeros((cin, xshape[1] + 2 * p, xshape[2] + 2 * p), dtype=grad.dtype)
        for i in range(k):
            for j in range(k):
                dxp[:, i:i + s * ho:s, j:j + s * wo:s] += dcols[:, i, j]
        dx = dxp[:, p:p + xshape[1], p:p + xshape[2]]
        return dx, dw, db
