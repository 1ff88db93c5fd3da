"""Restricted Boltzmann machine prior over binary latent codes.

A latent vector of width ``d`` is split in two halves: the first ``d_left``
units form the left side of the bipartite graph, the rest the right side.
Energies are ``E(z) = -b.z - z_L^T W z_R`` and the distribution is
``p(z) = exp(-beta E(z)) / Z``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import CapabilityError, ContractViolation
from .latent import sigmoid

MAX_EXACT_LEFT = 24
MAX_EXACT_STATES = 20


@dataclass
class RbmParams:
    w: np.ndarray  # (d_left, d_right)
    b: np.ndarray  # (d_left + d_right,)

    def __post_init__(self):
        if self.w.ndim != 2 or self.b.shape != (sum(self.w.shape),):
            raise ContractViolation(f"bias {self.b.shape} incompatible with weights {self.w.shape}")

    @property
    def d_left(self) -> int:
        return self.w.shape[0]

    @property
    def d_right(self) -> int:
        return self.w.shape[1]

    @property
    def d_latent(self) -> int:
        return self.b.shape[0]

    @property
    def b_left(self):
        return self.b[: self.d_left]

    @property
    def b_right(self):
        return self.b[self.d_left:]

    def copy(self) -> "RbmParams":
        return RbmParams(self.w.copy(), self.b.copy())

    def scaled(self, factor) -> "RbmParams":
        return RbmParams(self.w * factor, self.b * factor)

    @classmethod
    def zeros(cls, d_latent, dtype=np.float64) -> "RbmParams":
        if d_latent % 2:
            raise ContractViolation("latent width must be even")
        h = d_latent // 2
        return cls(np.zeros((h, h), dtype=dtype), np.zeros(d_latent, dtype=dtype))

    @classmethod
    def random(cls, d_left, d_right, rng, scale=1.0) -> "RbmParams":
        w = rng.uniform(-scale, scale, size=(d_left, d_right))
        b = rng.uniform(-scale, scale, size=d_left + d_right)
        return cls(w, b)


def _check_width(params, z):
    if z.shape[-1] != params.d_latent:
        raise ContractViolation(f"state width {z.shape[-1]} != latent width {params.d_latent}")


def rbm_energy(params: RbmParams, z) -> np.ndarray:
    """Energy of binary or relaxed states ``z`` (last axis = latent units)."""
    z = np.asarray(z, dtype=np.float64)
    _check_width(params, z)
    zl, zr = z[..., : params.d_left], z[..., params.d_left:]
    w = params.w.astype(np.float64, copy=False)
    return -(z @ params.b.astype(np.float64)) - np.sum((zl @ w) * zr, axis=-1)


def energy_grad_z(params: RbmParams, z) -> np.ndarray:
    """dE/dz for each row of ``z``."""
    z = np.asarray(z, dtype=np.float64)
    zl, zr = z[..., : params.d_left], z[..., params.d_left:]
    w = params.w.astype(np.float64, copy=False)
    b = params.b.astype(np.float64, copy=False)
    return np.concatenate([-b[: params.d_left] - zr @ w.T, -b[params.d_left:] - zl @ w], axis=-1)


def all_states(d) -> np.ndarray:
    """Every bit string of width ``d``; row ``s`` has ``z_i = (s >> i) & 1``."""
    s = np.arange(2**d, dtype=np.int64)[:, None]
    return ((s >> np.arange(d)) & 1).astype(np.uint8)


def exact_log_partition(params: RbmParams, beta=1.0) -> float:
    """``log Z`` by enumerating the left side and summing out the right side."""
    if params.d_left > MAX_EXACT_LEFT:
        raise CapabilityError(
            f"exact partition function limited to {MAX_EXACT_LEFT} left units, got {params.d_left}"
        )
    w = params.w.astype(np.float64)
    bl = params.b_left.astype(np.float64)
    br = params.b_right.astype(np.float64)
    d = params.d_left
    chunk_bits = min(d, 16)
    low = all_states(chunk_bits).astype(np.float64)
    parts = []
    for hi in range(2 ** (d - chunk_bits)):
        high = ((hi >> np.arange(d - chunk_bits)) & 1).astype(np.float64)
        zl = np.concatenate([low, np.broadcast_to(high, (low.shape[0], d - chunk_bits))], axis=1)
        field = beta * (br + zl @ w)
        terms = beta * (zl @ bl) + np.logaddexp(0.0, field).sum(axis=1)
        parts.append(logsumexp(terms))
    return float(logsumexp(parts))


def exact_pmf(params: RbmParams, beta=1.0) -> np.ndarray:
    """Boltzmann probabilities of all states, indexed as in :func:`all_states`."""
    if params.d_latent > MAX_EXACT_STATES:
        raise CapabilityError(
            f"exact pmf limited to {MAX_EXACT_STATES} units, got {params.d_latent}"
        )
    states = all_states(params.d_latent)
    logits = -beta * rbm_energy(params, states)
    return np.exp(logits - logsumexp(logits))


def _sample_right(params, beta, zl, rng):
    p = sigmoid(beta * (params.b_right + zl @ params.w))
    return (rng.random(p.shape) < p).astype(np.uint8)


def _sample_left(params, beta, zr, rng):
    p = sigmoid(beta * (params.b_left + zr @ params.w.T))
    return (rng.random(p.shape) < p).astype(np.uint8)


def block_gibbs(params: RbmParams, beta, n_chains, n_steps, rng, init=None) -> np.ndarray:
    """Run ``n_chains`` block-Gibbs chains for ``n_steps`` and return final states.

    One step resamples the right side given the left, then the left given
    the right. Chains start uniformly at random unless ``init`` is given.
    """
    if n_steps < 1:
        raise ContractViolation("n_steps must be >= 1")
    d = params.d_latent
    if init is None:
        z = (rng.random((n_chains, d)) < 0.5).astype(np.uint8)
    else:
        z = np.array(init, dtype=np.uint8)
        _check_width(params, z)
    zl, zr = z[:, : params.d_left], z[:, params.d_left:]
    for _ in range(n_steps):
        zr = _sample_right(params, beta, zl, rng)
        zl = _sample_left(params, beta, zr, rng)
    return np.concatenate([zl, zr], axis=1)


class PersistentGibbs:
    """Persistent block-Gibbs chains used for the negative phase."""

    def __init__(self, d_latent, n_chains=64, steps_per_update=5, rng=None):
        self.rng = rng if rng is not None else np.random.default_rng()
        self.steps_per_update = steps_per_update
        self.state = (self.rng.random((n_chains, d_latent)) < 0.5).astype(np.uint8)

    def sample(self, params: RbmParams, beta=1.0) -> np.ndarray:
        p = RbmParams(params.w.astype(np.float64), params.b.astype(np.float64))
        self.state = block_gibbs(p, beta, len(self.state), self.steps_per_update, self.rng, self.state)
        return self.state.copy()


def cd_gradients(positive, negative, beta=1.0, negative_weights=None):
    """Contrastive-divergence estimate of d log p(positive) / d(W, b).

    ``positive`` may hold relaxed values in (0, 1). ``negative_weights``
    turns the negative phase into a weighted average, e.g. ``exact_pmf``
    over :func:`all_states`. Returns ``(dW, db)``; ascending them raises the
    likelihood of the positives.
    """
    pos = np.asarray(positive, dtype=np.float64)
    neg = np.asarray(negative, dtype=np.float64)
    if pos.ndim != 2 or neg.ndim != 2 or len(pos) == 0 or len(neg) == 0:
        raise ContractViolation("positive and negative sets must be non-empty 2-D arrays")
    if pos.shape[1] != neg.shape[1] or pos.shape[1] % 2:
        raise ContractViolation("sample widths must match and be even")
    d_left = pos.shape[1] // 2
    if negative_weights is None:
        wn = np.full(len(neg), 1.0 / len(neg))
    else:
        wn = np.asarray(negative_weights, dtype=np.float64)
    wp = np.full(len(pos), 1.0 / len(pos))

    def moments(z, wts):
        mean = wts @ z
        corr = (z[:, :d_left] * wts[:, None]).T @ z[:, d_left:]
        return mean, corr

    mp, cp = moments(pos, wp)
    mn, cn = moments(neg, wn)
    return beta * (cp - cn), beta * (mp - mn)


def l2_gradient(params: RbmParams, coefficient):
    """Gradient of ``coefficient/2 * (|W|^2 + |b|^2)``."""
    return coefficient * params.w, coefficient * params.b


def project_box(params: RbmParams) -> RbmParams:
    """Clamp every weight and bias into [-1, 1]."""
    return RbmParams(np.clip(params.w, -1.0, 1.0), np.clip(params.b, -1.0, 1.0))

