"""Recall against the comparison budget, next to a random-order baseline.

python demos/02_recall_vs_budget.py
"""

import numpy as np

from qvae_ann import QvaeConfig, build_index, hash_codes, train
from qvae_ann import bench
from qvae_ann.data import generate_synthetic

n, k = 50_000, 100
X, _ = generate_synthetic(n, 128, 200, 0.1, seed=1)
model = train(X, QvaeConfig(d_data=128, epochs=10, seed=1))
index = build_index(np.arange(n), hash_codes(model, X), 64)
print("m =", index.m)

# budgets below k/n cannot hold k candidates, so the grid starts above that
budgets = bench.budget_grid(n, k)
res = bench.run_recall_sweep(X, model, budgets, k=k, n_queries=100, seed=1, index=index)

print(f"{'c_max/n':>8} {'c_max':>6} {'median':>7} {'mean':>6} {'random':>7} {'speedup':>8}")
for row in res.summary():
    print(f"{row['budget_fraction']:8.4f} {row['c_max']:6d} {row['median']:7.3f} "
          f"{row['mean']:6.3f} {row['random_mean']:7.4f} {row['speedup']:8.1f}")

# the same curve at every budget at once, from visit order alone
curves = bench.recall_curves(X, index, model, res.query_ids, k)
for target in (0.5, 0.8, 0.95):
    c = int(np.argmax(curves.mean(axis=0) >= target)) + 1
    print(f"mean recall {target} first reached at c_max = {c} ({100 * c / n:.2f}% of n)")
