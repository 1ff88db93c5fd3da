"""Small dense networks: layers, ReLU, explicit backprop and Adam.

Parameters are stored at the caller's precision (float32 by default, float64
for gradient checks); every product and reduction is carried out in float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, NumericFailure


@dataclass
class DenseLayer:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    relu: bool = True

    def __post_init__(self):
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ContractViolation(
                f"bias shape {self.bias.shape} does not match weights {self.weights.shape}"
            )

    @property
    def n_in(self) -> int:
        return self.weights.shape[1]

    @property
    def n_out(self) -> int:
        return self.weights.shape[0]


def init_layer(n_in, n_out, rng, relu=True, dtype=np.float32) -> DenseLayer:
    """Glorot-uniform weights, zero bias."""
    limit = np.sqrt(6.0 / (n_in + n_out))
    w = rng.uniform(-limit, limit, size=(n_out, n_in)).astype(dtype)
    return DenseLayer(w, np.zeros(n_out, dtype=dtype), relu=relu)


def relu(x):
    return np.maximum(x, 0.0)


def linear_forward(x, layer: DenseLayer) -> np.ndarray:
    """``W @ x + b`` for a vector, or row-wise for a (batch, in) matrix."""
    x = np.asarray(x)
    if x.shape[-1] != layer.n_in:
        raise ContractViolation(f"input width {x.shape[-1]} != layer input {layer.n_in}")
    w = layer.weights.astype(np.float64, copy=False)
    b = layer.bias.astype(np.float64, copy=False)
    return x.astype(np.float64, copy=False) @ w.T + b


@dataclass
class ForwardCache:
    inputs: list = field(default_factory=list)  # input to each layer
    preacts: list = field(default_factory=list)  # W x + b, before activation


def forward(x, layers):
    """Run ``x`` through ``layers``; returns ``(output, cache)`` for backprop."""
    cache = ForwardCache()
    h = np.asarray(x, dtype=np.float64)
    for layer in layers:
        cache.inputs.append(h)
        a = linear_forward(h, layer)
        cache.preacts.append(a)
        h = relu(a) if layer.relu else a
    return h, cache


def backprop(cache: ForwardCache | None, layers, upstream):
    """Chain rule through ``layers`` given the cache from :func:`forward`.

    ``upstream`` is dLoss/dOutput with the same shape as the forward output.
    Returns ``(param_grads, dx)`` where ``param_grads[i] = (dW_i, db_i)``.
    Batch rows are summed, so scale ``upstream`` if the loss is a mean.
    """
    if cache is None or len(cache.inputs) != len(layers):
        raise ContractViolation("backprop needs the activations cached by forward()")
    g = np.asarray(upstream, dtype=np.float64)
    grads = [None] * len(layers)
    for i in range(len(layers) - 1, -1, -1):
        layer = layers[i]
        if layer.relu:
            # subgradient 0 at exactly 0
            g = g * (cache.preacts[i] > 0)
        x = cache.inputs[i]
        if g.ndim == 1:
            dw = np.outer(g, x)
            db = g.copy()
        else:
            dw = g.T @ x
            db = g.sum(axis=0)
        grads[i] = (dw, db)
        g = g @ layer.weights.astype(np.float64, copy=False)
    return grads, g


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params, **hyper) -> "AdamState":
        m = [np.zeros(p.shape, dtype=np.float64) for p in params]
        v = [np.zeros(p.shape, dtype=np.float64) for p in params]
        state = cls(m=m, v=v, **hyper)
        if not (0 <= state.beta1 < 1 and 0 <= state.beta2 < 1):
            raise ContractViolation("Adam decay rates must lie in [0, 1)")
        return state


def adam_step(params, grads, state: AdamState):
    """One bias-corrected Adam update.

    Returns ``(new_params, new_state)``; the inputs are left untouched.
    Raises :class:`NumericFailure` without updating anything if a gradient
    is not finite.
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ContractViolation("params, grads and Adam state must align")
    for p, g in zip(params, grads):
        if p.shape != np.shape(g):
            raise ContractViolation(f"gradient shape {np.shape(g)} != param shape {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericFailure("non-finite gradient; Adam step rejected")

    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        g = np.asarray(g, dtype=np.float64)
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        step = state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        new_params.append((p.astype(np.float64) - step).astype(p.dtype))
        new_m.append(m)
        new_v.append(v)
    new_state = AdamState(
        m=new_m, v=new_v, t=t, lr=state.lr, beta1=b1, beta2=b2, eps=state.eps
    )
    return new_params, new_state
