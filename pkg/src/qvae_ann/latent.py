"""Binary latent variables: relaxed sampling, binarization, posterior log-prob."""

from __future__ import annotations

import numpy as np

from .errors import ContractViolation

ALPHA = 7.0
NOISE_EPS = 1e-7


def sigmoid(t):
    t = np.asarray(t, dtype=np.float64)
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def log_sigmoid(t):
    return -np.logaddexp(0.0, -np.asarray(t, dtype=np.float64))


def draw_noise(rng, shape):
    """Uniform noise for :func:`reparam_sample`, clamped away from 0 and 1."""
    return np.clip(rng.random(shape), NOISE_EPS, 1.0 - NOISE_EPS)


def reparam_sample(zeta, rho, alpha=ALPHA):
    """Smoothed Bernoulli sample ``sigmoid(alpha * (zeta + logit(rho)))``.

    Returns ``(z, dz_dzeta)``. ``z`` lies strictly inside (0, 1) except where
    float64 saturates.
    """
    zeta = np.asarray(zeta, dtype=np.float64)
    rho = np.asarray(rho, dtype=np.float64)
    if zeta.shape != rho.shape:
        raise ContractViolation(f"logits {zeta.shape} and noise {rho.shape} differ in shape")
    if alpha <= 0:
        raise ContractViolation("alpha must be positive")
    if np.any(rho <= 0.0) or np.any(rho >= 1.0):
        raise ContractViolation("noise must lie in the open interval (0, 1)")
    z = sigmoid(alpha * (zeta + np.log(rho) - np.log1p(-rho)))
    return z, alpha * z * (1.0 - z)


def binarize(zeta) -> np.ndarray:
    """Most likely state of each Bernoulli(sigmoid(zeta)); zeta == 0 maps to 1."""
    return (np.asarray(zeta) >= 0).astype(np.uint8)


def bernoulli_cross_entropy(zeta, z):
    """``sum_i z_i log s(zeta_i) + (1 - z_i) log(1 - s(zeta_i))`` over the last axis.

    Returns ``(value, d_zeta, d_z)``; ``value`` has one entry per row.
    """
    zeta = np.asarray(zeta, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if zeta.shape != z.shape:
        raise ContractViolation(f"logits {zeta.shape} and samples {z.shape} differ in shape")
    log_p = log_sigmoid(zeta)
    log_not_p = log_sigmoid(-zeta)
    value = np.sum(z * log_p + (1.0 - z) * log_not_p, axis=-1)
    d_zeta = z - sigmoid(zeta)
    d_z = log_p - log_not_p  # == zeta
    return value, d_zeta, d_z
