"""Path-integral Monte Carlo against exact diagonalization on three spins.

python demos/04_quantum_sampler.py
"""

import numpy as np

from qvae_ann.boltzmann import RbmParams, all_states, block_gibbs
from qvae_ann.quantum import (
    IsingModel,
    TrotterConfig,
    estimate_beta_eff,
    exact_qbm_pmf,
    piqmc_sample,
)

J = np.zeros((3, 3))
J[0, 1] = J[1, 0] = 0.8
J[1, 2] = J[2, 1] = -0.5
model = IsingModel(h=np.array([0.3, -0.2, 0.5]), J=J)
cfg = TrotterConfig(n_slices=64, sweeps=20_200, burn_in=200, n_chains=8)

states = all_states(3)
for gamma in (0.0, 0.5, 1.0, 4.0):
    s = piqmc_sample(model, gamma, 1.0, cfg, np.random.default_rng(0))
    emp = np.bincount(s @ (1 << np.arange(3)), minlength=8) / len(s)
    exact = exact_qbm_pmf(model, gamma, 1.0)
    tv = 0.5 * np.abs(emp - exact).sum()
    print(f"gamma {gamma:3.1f}  TV {tv:.4f}  marginals {np.round(s.mean(0), 3)}")
    if gamma == 0.5:
        for z, p, q in zip(states, exact, emp):
            print("   ", z, f"exact {p:.4f}  sampled {q:.4f}")

# %% effective temperature: which beta makes the RBM explain external samples?
p = RbmParams.random(4, 4, np.random.default_rng(1), scale=0.8)
for beta_true in (0.7, 1.3):
    samples = block_gibbs(p.scaled(beta_true), 1.0, 20_000, 100, np.random.default_rng(2))
    est = estimate_beta_eff(samples, p, rng=np.random.default_rng(3))
    print(f"samples at beta {beta_true}: estimated {est.beta:.3f} (converged {est.converged})")
