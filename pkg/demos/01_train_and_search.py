"""Train a 64-bit hash on clustered data and search it.

python demos/01_train_and_search.py
"""

import time

import numpy as np

from qvae_ann import QueryConfig, QvaeConfig, build_index, hash_codes, linear_search, query, train
from qvae_ann.data import generate_synthetic

# %% data: 20k points around 100 centres in 64 dimensions
X, labels = generate_synthetic(20_000, 64, 100, 0.1, seed=0)
print("data", X.shape, X.dtype)

# %% train the VAE with a classical RBM prior (a few epochs is enough here)
cfg = QvaeConfig(d_data=64, d_latent=64, epochs=8, seed=0)
t = time.time()
model = train(X, cfg)
print(f"trained in {time.time() - t:.1f}s, last epoch:", model.history[-1])

# %% every row gets a deterministic 64-bit code; equal codes share a bucket
codes = hash_codes(model, X)
index = build_index(np.arange(len(X)), codes, cfg.d_latent)
print("occupied codes m =", index.m, " largest bucket =", index.sizes().max())

# points from the same cluster should mostly share codes
same = [len(np.unique(codes[labels == c])) for c in range(5)]
print("distinct codes in the first five clusters:", same)

# %% a query walks buckets in Hamming order and stops after c_max comparisons
x = X[123]
approx = query(index, X, model, x, QueryConfig(k=10, c_max=400))
exact = linear_search(X, x, 10)
print("approx ids:", approx.ids)
print("exact  ids:", exact.ids)
print("recall@10 =", len(np.intersect1d(approx.ids, exact.ids)) / 10,
      " comparisons:", approx.comparisons, "of", len(X))
