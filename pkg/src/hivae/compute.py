"""Reverse-mode automatic differentiation on numpy arrays, plus layers,
samplers, and Adam.

Everything downstream builds minibatch-sized graphs out of these ops: a node
wraps a float64 ndarray, remembers its parents, and knows how to push its
gradient back to them.  Graphs are small (a few hundred nodes) while the
arrays carry the batch dimension, so training stays fast without any
framework dependency.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

LOG_VAR_CLAMP = 15.0  # |log variance| bound before exponentiation


class Tensor:
    """A differentiable array: values, a same-shape grad accumulator, and an
    optional backward record linking it to its parents."""

    __slots__ = ("values", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, values, requires_grad=False, _parents=(), _backward=None):
        self.values = np.asarray(values, dtype=np.float64)
        self.grad = np.zeros_like(self.values)
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.values.shape

    def __repr__(self):
        return f"Tensor(shape={self.values.shape}, requires_grad={self.requires_grad})"

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_lift(other), self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def parameter(values) -> Tensor:
    return Tensor(values, requires_grad=True)


def constant(values) -> Tensor:
    return Tensor(values, requires_grad=False)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the parent's shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _node(values, parents, backward) -> Tensor:
    return Tensor(values, requires_grad=False, _parents=parents, _backward=backward)


def add(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    out = _node(a.values + b.values, (a, b), None)

    def back():
        a.grad += _unbroadcast(out.grad, a.values.shape)
        b.grad += _unbroadcast(out.grad, b.values.shape)

    out._backward = back
    return out


def sub(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    out = _node(a.values - b.values, (a, b), None)

    def back():
        a.grad += _unbroadcast(out.grad, a.values.shape)
        b.grad -= _unbroadcast(out.grad, b.values.shape)

    out._backward = back
    return out


def mul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    out = _node(a.values * b.values, (a, b), None)

    def back():
        a.grad += _unbroadcast(out.grad * b.values, a.values.shape)
        b.grad += _unbroadcast(out.grad * a.values, b.values.shape)

    out._backward = back
    return out


def div(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    out = _node(a.values / b.values, (a, b), None)

    def back():
        a.grad += _unbroadcast(out.grad / b.values, a.values.shape)
        b.grad += _unbroadcast(-out.grad * a.values / (b.values * b.values), b.values.shape)

    out._backward = back
    return out


def matmul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    if a.values.ndim != 2 or b.values.ndim != 2 or a.values.shape[1] != b.values.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.values.shape} @ {b.values.shape}")
    out = _node(a.values @ b.values, (a, b), None)

    def back():
        a.grad += out.grad @ b.values.T
        b.grad += a.values.T @ out.grad

    out._backward = back
    return out


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = _lift(a)
    out = _node(a.values.sum(axis=axis, keepdims=keepdims), (a,), None)

    def back():
        g = out.grad
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a.grad += np.broadcast_to(g, a.values.shape)

    out._backward = back
    return out


def exp(a) -> Tensor:
    a = _lift(a)
    out = _node(np.exp(a.values), (a,), None)

    def back():
        a.grad += out.grad * out.values

    out._backward = back
    return out


def log(a) -> Tensor:
    a = _lift(a)
    out = _node(np.log(a.values), (a,), None)

    def back():
        a.grad += out.grad / a.values

    out._backward = back
    return out


def softplus(a) -> Tensor:
    """log(1 + e^x), computed stably for large |x|."""
    a = _lift(a)
    out = _node(np.logaddexp(0.0, a.values), (a,), None)

    def back():
        a.grad += out.grad * expit(a.values)

    out._backward = back
    return out


def sigmoid(a) -> Tensor:
    a = _lift(a)
    s = expit(a.values)
    out = _node(s, (a,), None)

    def back():
        a.grad += out.grad * s * (1.0 - s)

    out._backward = back
    return out


def relu(a) -> Tensor:
    a = _lift(a)
    out = _node(np.maximum(a.values, 0.0), (a,), None)

    def back():
        a.grad += out.grad * (a.values > 0.0)

    out._backward = back
    return out


def clip(a, lo=None, hi=None) -> Tensor:
    """Hard clamp; gradient passes only where the input is strictly inside."""
    a = _lift(a)
    out = _node(np.clip(a.values, lo, hi), (a,), None)

    def back():
        inside = np.ones_like(a.values, dtype=bool)
        if lo is not None:
            inside &= a.values >= lo
        if hi is not None:
            inside &= a.values <= hi
        a.grad += out.grad * inside

    out._backward = back
    return out


def clip_min(a, lo) -> Tensor:
    return clip(a, lo=lo)


def concat(parts, axis=1) -> Tensor:
    parts = [_lift(p) for p in parts]
    out = _node(np.concatenate([p.values for p in parts], axis=axis), tuple(parts), None)
    sizes = [p.values.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def back():
        for p, start, stop in zip(parts, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * out.grad.ndim
            idx[axis] = slice(start, stop)
            p.grad += out.grad[tuple(idx)]

    out._backward = back
    return out


def narrow(a, start, width, axis=1) -> Tensor:
    """Contiguous slice along an axis."""
    a = _lift(a)
    idx = [slice(None)] * a.values.ndim
    idx[axis] = slice(start, start + width)
    idx = tuple(idx)
    out = _node(a.values[idx], (a,), None)

    def back():
        a.grad[idx] += out.grad

    out._backward = back
    return out


def cumsum(a, axis=1) -> Tensor:
    a = _lift(a)
    out = _node(np.cumsum(a.values, axis=axis), (a,), None)

    def back():
        flipped = np.flip(out.grad, axis=axis)
        a.grad += np.flip(np.cumsum(flipped, axis=axis), axis=axis)

    out._backward = back
    return out


def softmax(a, axis=-1) -> Tensor:
    """Shift-invariant softmax; the max is subtracted as a constant."""
    a = _lift(a)
    shifted = sub(a, constant(a.values.max(axis=axis, keepdims=True)))
    e = exp(shifted)
    return div(e, tsum(e, axis=axis, keepdims=True))


def log_softmax(a, axis=-1) -> Tensor:
    a = _lift(a)
    shifted = sub(a, constant(a.values.max(axis=axis, keepdims=True)))
    return sub(shifted, log(tsum(exp(shifted), axis=axis, keepdims=True)))


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into every leaf tensor's grad.

    Interior grads are reset per pass, so calling backward twice doubles the
    leaf gradients, as an accumulator should.
    """
    if loss.values.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.values.shape}")
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
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
            if id(p) not in seen:
                stack.append((p, False))
    for node in topo:
        if node._parents:
            node.grad[...] = 0.0
    loss.grad[...] += 1.0
    for node in reversed(topo):
        if node._backward is not None:
            node._backward()


def zero_grads(params) -> None:
    for p in params:
        p.grad[...] = 0.0


# ---------------------------------------------------------------------------
# Layers
# ---------------------------------------------------------------------------

ACTIVATIONS = ("identity", "relu", "softplus", "sigmoid")


@dataclass
class DenseLayer:
    weights: Tensor  # (n_in, n_out)
    bias: Tensor  # (n_out,)
    activation: str = "identity"

    @property
    def n_in(self) -> int:
        return self.weights.values.shape[0]

    @property
    def n_out(self) -> int:
        return self.weights.values.shape[1]


def init_dense(n_in: int, n_out: int, activation: str, rng) -> DenseLayer:
    """Uniform +-sqrt(6/(n_in+n_out)) weights, zero bias."""
    if activation not in ACTIVATIONS:
        raise ValueError(f"unknown activation {activation!r}")
    bound = np.sqrt(6.0 / (n_in + n_out))
    w = rng.uniform(-bound, bound, size=(n_in, n_out))
    return DenseLayer(parameter(w), parameter(np.zeros(n_out)), activation)


def forward_dense(layer: DenseLayer, x: Tensor) -> Tensor:
    x = _lift(x)
    if x.values.ndim != 2 or x.values.shape[1] != layer.n_in:
        raise ValueError(
            f"dense layer expects (batch, {layer.n_in}), got {x.values.shape}"
        )
    y = add(matmul(x, layer.weights), layer.bias)
    if layer.activation == "relu":
        return relu(y)
    if layer.activation == "softplus":
        return softplus(y)
    if layer.activation == "sigmoid":
        return sigmoid(y)
    return y


def forward_stack(layers, x: Tensor) -> Tensor:
    for layer in layers:
        x = forward_dense(layer, x)
    return x


# ---------------------------------------------------------------------------
# Stochastic nodes
# ---------------------------------------------------------------------------


def sample_gaussian_reparam(mu: Tensor, log_var: Tensor, rng) -> Tensor:
    """mu + exp(log_var/2) * eps with eps ~ N(0, 1); differentiable in both."""
    if mu.values.shape != log_var.values.shape:
        raise ValueError("mu/log_var shape mismatch")
    eps = constant(rng.standard_normal(mu.values.shape))
    lv = clip(log_var, -LOG_VAR_CLAMP, LOG_VAR_CLAMP)
    return add(mu, mul(exp(mul(lv, 0.5)), eps))


def sample_gumbel_softmax(logits: Tensor, tau: float, rng) -> Tensor:
    """softmax((logits + Gumbel noise)/tau); positive, sums to 1 along axis 1."""
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    logits = _lift(logits)
    u = np.clip(rng.random(logits.values.shape), 1e-12, 1.0 - 1e-12)
    gumbel = constant(-np.log(-np.log(u)))
    return softmax(div(add(logits, gumbel), tau), axis=-1)


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(state: AdamState, params) -> None:
    """One bias-corrected Adam update; zeroes the gradients afterwards."""
    params = list(params)
    if not state.m:
        state.m = [np.zeros_like(p.values) for p in params]
        state.v = [np.zeros_like(p.values) for p in params]
    if len(state.m) != len(params):
        raise ValueError("parameter list does not match optimizer state")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    for p, m, v in zip(params, state.m, state.v):
        g = p.grad
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**state.step)
        v_hat = v / (1.0 - b2**state.step)
        p.values -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        p.grad[...] = 0.0
