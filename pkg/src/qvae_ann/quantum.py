"""Transverse-field Ising prior: conversion, exact oracle, path-integral Monte Carlo.

Spins ``lam`` take values in {-1, +1} and relate to bits by ``lam = 2 z - 1``.
The Hamiltonian sampled here is

    H = -sum_i h_i Z_i - sum_{i<j} J_ij Z_i Z_j - gamma * sum_i X_i

at fixed inverse temperature ``beta``. Samples are drawn from the diagonal
of ``exp(-beta H) / Tr exp(-beta H)`` in the computational basis.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.special import logsumexp

from .boltzmann import RbmParams, all_states, block_gibbs, rbm_energy
from .errors import CapabilityError, ContractViolation

log = logging.getLogger(__name__)

MAX_EXACT_SPINS = 12


@dataclass
class IsingModel:
    h: np.ndarray  # (N,)
    J: np.ndarray  # (N, N) symmetric, zero diagonal
    offset: float = 0.0

    def __post_init__(self):
        n = self.h.shape[0]
        if self.J.shape != (n, n):
            raise ContractViolation(f"coupling matrix {self.J.shape} does not match {n} spins")
        if np.any(np.diag(self.J) != 0) or not np.allclose(self.J, self.J.T, atol=0, rtol=0):
            raise ContractViolation("couplings must be symmetric with zero diagonal")

    @property
    def n_spins(self) -> int:
        return self.h.shape[0]


def ising_energy(model: IsingModel, lam) -> np.ndarray:
    """``-h.lam - sum_{i<j} J_ij lam_i lam_j`` (offset not included)."""
    lam = np.asarray(lam, dtype=np.float64)
    return -(lam @ model.h) - 0.5 * np.sum((lam @ model.J) * lam, axis=-1)


def bits_to_spins(z):
    return 2 * np.asarray(z, dtype=np.int8) - 1


def spins_to_bits(lam):
    return ((np.asarray(lam) + 1) // 2).astype(np.uint8)


def bm_to_ising(params: RbmParams) -> IsingModel:
    """Ising form of an RBM with ``E_rbm(z) == E_ising(2z - 1) + offset``."""
    w = params.w.astype(np.float64)
    b = params.b.astype(np.float64)
    dl, n = params.d_left, params.d_latent
    J = np.zeros((n, n))
    J[:dl, dl:] = w / 4.0
    J[dl:, :dl] = w.T / 4.0
    h = b / 2.0
    h[:dl] += w.sum(axis=1) / 4.0
    h[dl:] += w.sum(axis=0) / 4.0
    offset = -b.sum() / 2.0 - w.sum() / 4.0
    return IsingModel(h=h, J=J, offset=float(offset))


def transverse_hamiltonian(model: IsingModel, gamma) -> np.ndarray:
    """Dense ``2^N x 2^N`` Hamiltonian in the basis of :func:`all_states`."""
    n = model.n_spins
    if n > MAX_EXACT_SPINS:
        raise CapabilityError(f"dense Hamiltonian limited to {MAX_EXACT_SPINS} spins, got {n}")
    dim = 2**n
    H = np.diag(ising_energy(model, bits_to_spins(all_states(n))))
    idx = np.arange(dim)
    for i in range(n):
        H[idx, idx ^ (1 << i)] -= gamma
    return H


def exact_qbm_pmf(model: IsingModel, gamma, beta=1.0) -> np.ndarray:
    """Diagonal of the thermal state, indexed like :func:`all_states`."""
    if gamma < 0:
        raise ContractViolation("transverse field must be non-negative")
    H = transverse_hamiltonian(model, gamma)
    evals, evecs = np.linalg.eigh(H)
    weights = np.exp(-beta * (evals - evals.min()))
    diag = (evecs**2) @ weights
    return diag / weights.sum()


def classical_pmf(model: IsingModel, beta=1.0) -> np.ndarray:
    n = model.n_spins
    if n > 20:
        raise CapabilityError(f"classical table limited to 20 spins, got {n}")
    logits = -beta * ising_energy(model, bits_to_spins(all_states(n)))
    return np.exp(logits - logsumexp(logits))


@dataclass
class TrotterConfig:
    n_slices: int = 64
    sweeps: int = 2000
    burn_in: int = 200
    n_chains: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.n_slices < 2:
            raise ContractViolation("need at least 2 Trotter slices")
        if not self.sweeps > self.burn_in >= 0:
            raise ContractViolation("require sweeps > burn_in >= 0")


def effective_slices(n_slices, beta, gamma, max_step=0.5) -> int:
    """Double the slice count until ``beta * gamma / P <= max_step``."""
    p = n_slices
    while beta * gamma / p > max_step:
        p *= 2
    return p


def interslice_coupling(beta, gamma, n_slices) -> float:
    """Ferromagnetic coupling between replicas: ``0.5 * log coth(beta gamma / P)``."""
    x = beta * gamma / n_slices
    return float(-0.5 * np.log(np.tanh(x)))


def _neighbour_table(J):
    n = J.shape[0]
    nz = [np.flatnonzero(J[i]) for i in range(n)]
    deg = np.array([len(a) for a in nz], dtype=np.int64)
    width = max(1, int(deg.max()) if n else 1)
    idx = np.zeros((n, width), dtype=np.int64)
    val = np.zeros((n, width), dtype=np.float64)
    for i, a in enumerate(nz):
        idx[i, : len(a)] = a
        val[i, : len(a)] = J[i, a]
    return deg, idx, val


@njit(cache=True)
def _lattice_sweeps(spins, h, deg, nbr, nbr_j, a, j_perp, worldline, n_sweeps, n_burn, seed, out):
    """Metropolis on a (chains, P, N) replica lattice; stores slice 0 after burn-in.

    ``a`` = beta / P scales the classical energy of each slice. With P == 1
    and ``j_perp`` == 0 this is plain single-spin Metropolis.
    """
    np.random.seed(seed)
    n_chains, n_slices, n = spins.shape
    fields = np.empty((n_slices, n))
    for c in range(n_chains):
        for k in range(n_slices):
            for i in range(n):
                f = h[i]
                for t in range(deg[i]):
                    f += nbr_j[i, t] * spins[c, k, nbr[i, t]]
                fields[k, i] = f
        for sweep in range(n_sweeps):
            for k in range(n_slices):
                kp = k + 1 if k + 1 < n_slices else 0
                km = k - 1 if k > 0 else n_slices - 1
                for i in range(n):
                    s = spins[c, k, i]
                    dlog = -2.0 * s * (a * fields[k, i] + j_perp * (spins[c, kp, i] + spins[c, km, i]))
                    if dlog >= 0.0 or np.random.random() < np.exp(dlog):
                        spins[c, k, i] = -s
                        for t in range(deg[i]):
                            fields[k, nbr[i, t]] -= 2.0 * s * nbr_j[i, t]
            if worldline:
                for i in range(n):
                    dlog = 0.0
                    for k in range(n_slices):
                        dlog -= 2.0 * spins[c, k, i] * a * fields[k, i]
                    if dlog >= 0.0 or np.random.random() < np.exp(dlog):
                        for k in range(n_slices):
                            s = spins[c, k, i]
                            spins[c, k, i] = -s
                            for t in range(deg[i]):
                                fields[k, nbr[i, t]] -= 2.0 * s * nbr_j[i, t]
            if sweep >= n_burn:
                r = sweep - n_burn
                for i in range(n):
                    out[c, r, i] = spins[c, 0, i]


def _run_lattice(model, spins, beta, gamma, n_sweeps, n_burn, seed):
    n_slices = spins.shape[1]
    deg, nbr, nbr_j = _neighbour_table(model.J)
    if gamma > 0:
        a = beta / n_slices
        j_perp = interslice_coupling(beta, gamma, n_slices)
        worldline = True
    else:
        a, j_perp, worldline = beta, 0.0, False
    out = np.empty((spins.shape[0], n_sweeps - n_burn, model.n_spins), dtype=np.int8)
    _lattice_sweeps(
        spins, model.h.astype(np.float64), deg, nbr, nbr_j,
        a, j_perp, worldline, n_sweeps, n_burn, np.int64(seed), out,
    )
    return out


def piqmc_sample(model: IsingModel, gamma, beta=1.0, cfg: TrotterConfig | None = None, rng=None):
    """Path-integral Monte Carlo samples of the transverse-field Ising model.

    Each chain contributes one readout (slice 0) per sweep after burn-in, so
    the result has ``n_chains * (sweeps - burn_in)`` rows of bits. ``gamma``
    == 0 falls back to single-spin Metropolis on the classical model.
    """
    if gamma < 0:
        raise ContractViolation("transverse field must be non-negative")
    cfg = cfg or TrotterConfig()
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    n_slices = effective_slices(cfg.n_slices, beta, gamma) if gamma > 0 else 1
    if n_slices != cfg.n_slices and gamma > 0:
        log.info("raising Trotter slices from %d to %d", cfg.n_slices, n_slices)
    init = rng.integers(0, 2, size=(cfg.n_chains, 1, model.n_spins)).astype(np.int8) * 2 - 1
    # start every replica of a chain from the same configuration
    spins = np.ascontiguousarray(np.repeat(init, n_slices, axis=1))
    seed = int(rng.integers(0, 2**31 - 1))
    out = _run_lattice(model, spins, beta, gamma, cfg.sweeps, cfg.burn_in, seed)
    return spins_to_bits(out.reshape(-1, model.n_spins))


class PathIntegralChains:
    """Persistent replica lattices used as the negative phase during training."""

    def __init__(self, n_spins, gamma, beta=1.0, n_chains=64, n_slices=64,
                 sweeps_per_update=5, rng=None):
        if gamma < 0:
            raise ContractViolation("transverse field must be non-negative")
        self.rng = rng if rng is not None else np.random.default_rng()
        self.gamma = float(gamma)
        self.beta = float(beta)
        self.sweeps_per_update = sweeps_per_update
        p = effective_slices(n_slices, beta, gamma) if gamma > 0 else 1
        init = self.rng.integers(0, 2, size=(n_chains, 1, n_spins)).astype(np.int8) * 2 - 1
        self.spins = np.ascontiguousarray(np.repeat(init, p, axis=1))

    def sample(self, params: RbmParams) -> np.ndarray:
        model = bm_to_ising(params)
        seed = int(self.rng.integers(0, 2**31 - 1))
        out = _run_lattice(model, self.spins, self.beta, self.gamma,
                           self.sweeps_per_update, self.sweeps_per_update - 1, seed)
        return spins_to_bits(out[:, 0, :])


@dataclass
class BetaEstimate:
    beta: float
    converged: bool
    identifiable: bool
    n_iter: int
    history: list = field(default_factory=list)


def estimate_beta_eff(samples, params: RbmParams, beta0=1.0, n_chains=2000, gibbs_steps=2,
                      max_iter=300, tol=0.01, rng=None) -> BetaEstimate:
    """Fit the inverse temperature of ``exp(-beta E) / Z`` to external samples.

    Only ``beta`` is free; the energy ``E`` is fixed by ``params``. Each
    iteration draws negatives by block Gibbs at the scaled parameters
    ``beta * params`` and moves ``beta`` along the CD gradient
    ``<E>_neg - <E>_pos``, preconditioned by the negative-phase energy
    variance. The returned value averages the second half of the iterates.
    """
    samples = np.asarray(samples)
    if samples.ndim != 2 or len(samples) == 0:
        raise ContractViolation("need a non-empty 2-D sample set")
    rng = rng if rng is not None else np.random.default_rng()
    if not np.any(params.w) and not np.any(params.b):
        # E is identically zero, every beta is stationary
        return BetaEstimate(beta0, converged=True, identifiable=False, n_iter=0, history=[beta0])
    p64 = RbmParams(params.w.astype(np.float64), params.b.astype(np.float64))
    e_pos = rbm_energy(p64, samples).mean()
    beta = float(beta0)
    chains = block_gibbs(p64.scaled(beta), 1.0, n_chains, 50, rng)
    history = [beta]
    for _ in range(max_iter):
        chains = block_gibbs(p64.scaled(beta), 1.0, n_chains, gibbs_steps, rng, chains)
        e_neg = rbm_energy(p64, chains)
        grad = e_neg.mean() - e_pos
        curvature = max(e_neg.var(), 1e-3)
        step = np.clip(grad / curvature, -0.5 * beta, 0.5 * beta)
        beta = max(beta + step, 1e-6)
        history.append(beta)
    tail = np.array(history[len(history) // 2:])
    estimate = float(tail.mean())
    # settled when the two halves of the averaging window agree
    half = len(tail) // 2
    drift = abs(tail[:half].mean() - tail[half:].mean())
    converged = bool(drift <= tol * estimate)
    if not converged:
        log.warning("beta_eff did not settle: drift %.4g around %.4g", drift, estimate)
    return BetaEstimate(estimate, converged=converged, identifiable=True,
                        n_iter=max_iter, history=history)
