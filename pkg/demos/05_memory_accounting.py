"""Index size: 28-byte header, 16 bytes per bucket, 8 bytes per row id.

python demos/05_memory_accounting.py
"""

import numpy as np

from qvae_ann.index import build_index, index_from_bytes, index_to_bytes, memory_report

n = 4_465_537
rng = np.random.default_rng(0)
for bits in (12, 16, 20, 24):
    codes = rng.integers(0, 2**bits, size=n, dtype=np.uint64)
    index = build_index(np.arange(n), codes, 64)
    buf = index_to_bytes(index)
    assert len(buf) == memory_report(index)
    print(f"{bits:2d} random bits: m = {index.m:9d}  {len(buf) / 1e6:6.1f} MB")

# row ids dominate once buckets are large; a round trip is bit-exact
assert index_from_bytes(buf) == index
print("8n alone:", 8 * n / 1e6, "MB")
