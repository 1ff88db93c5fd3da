"""Inverted index over binary codes with Hamming-ordered bounded refinement.

A query hashes its vector, orders all occupied codes by Hamming distance with
a counting sort (O(m)), then walks the buckets in that order computing exact
Euclidean distances until ``c_max`` comparisons have been made. The ``k``
closest candidates are returned, ties broken by smaller row id.

Index file layout (little-endian)::

    b"QVIX" | version u32 | d_latent u32 | m u64 | n u64 |
    m records of: code u64 | count u64 | count ids u64
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import NamedTuple

import numpy as np
from numba import njit

from .bits import MAX_WIDTH, hamming
from .errors import ContractViolation, FormatError
from .model import hash_codes

INDEX_MAGIC = b"QVIX"
INDEX_VERSION = 1
_IX_HEADER = struct.Struct("<4sIIQQ")
HEADER_BYTES = _IX_HEADER.size


@dataclass(eq=False)
class InvertedIndex:
    codes: np.ndarray  # (m,) uint64, bucket order
    offsets: np.ndarray  # (m + 1,) int64, bucket b holds ids[offsets[b]:offsets[b+1]]
    ids: np.ndarray  # (n,) int64
    d_latent: int

    @property
    def m(self) -> int:
        return len(self.codes)

    @property
    def n(self) -> int:
        return len(self.ids)

    @cached_property
    def _lookup(self) -> dict:
        return {int(c): b for b, c in enumerate(self.codes)}

    def bucket_of(self, code) -> int | None:
        return self._lookup.get(int(code))

    def bucket_ids(self, b) -> np.ndarray:
        return self.ids[self.offsets[b]:self.offsets[b + 1]]

    def sizes(self) -> np.ndarray:
        return np.diff(self.offsets)

    def __eq__(self, other):
        if not isinstance(other, InvertedIndex):
            return NotImplemented
        return (self.d_latent == other.d_latent
                and np.array_equal(self.codes, other.codes)
                and np.array_equal(self.offsets, other.offsets)
                and np.array_equal(self.ids, other.ids))


def build_index(ids, codes, d_latent) -> InvertedIndex:
    """Group row ids by code.

    Buckets are ordered by their smallest row id (their first appearance
    when rows arrive in id order) and ids inside a bucket ascend, so the
    result does not depend on the order of the input stream.
    """
    if not 1 <= d_latent <= MAX_WIDTH:
        raise ContractViolation(f"code width must be in [1, {MAX_WIDTH}], got {d_latent}")
    ids = np.asarray(ids, dtype=np.int64)
    codes = np.asarray(codes, dtype=np.uint64)
    if ids.shape != codes.shape or ids.ndim != 1:
        raise ContractViolation("ids and codes must be 1-D and of equal length")
    if d_latent < 64 and len(codes) and np.any(codes >> np.uint64(d_latent)):
        raise ContractViolation(f"codes use bits above width {d_latent}")
    by_id = np.argsort(ids, kind="stable")
    ids, codes = ids[by_id], codes[by_id]
    if len(ids) > 1 and np.any(ids[1:] == ids[:-1]):
        raise ContractViolation("duplicate row id in code stream")
    uniq, first, inverse = np.unique(codes, return_index=True, return_inverse=True)
    rank = np.empty(len(uniq), dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(len(uniq))
    bucket = rank[inverse]
    order = np.argsort(bucket, kind="stable")  # ids already ascending
    counts = np.bincount(bucket, minlength=len(uniq)) if len(uniq) else np.zeros(0, np.int64)
    offsets = np.zeros(len(uniq) + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    bucket_codes = np.empty(len(uniq), dtype=np.uint64)
    bucket_codes[rank] = uniq
    return InvertedIndex(bucket_codes, offsets, ids[order], int(d_latent))


@njit(cache=True)
def counting_sort(keys, n_bins):
    """Stable permutation sorting small non-negative integer ``keys``."""
    starts = np.zeros(n_bins + 1, dtype=np.int64)
    for k in keys:
        starts[k + 1] += 1
    for b in range(n_bins):
        starts[b + 1] += starts[b]
    out = np.empty(len(keys), dtype=np.int64)
    for i in range(len(keys)):
        k = keys[i]
        out[starts[k]] = i
        starts[k] += 1
    return out


def hamming_sorted_buckets(index: InvertedIndex, query_code):
    """Bucket positions ordered by Hamming distance to ``query_code``.

    Equal distances keep bucket order. Returns ``(order, distances)`` where
    ``distances`` is already permuted into ``order``.
    """
    q = int(query_code)
    if index.d_latent < 64 and q >> index.d_latent:
        raise ContractViolation(f"query code wider than index width {index.d_latent}")
    dist = hamming(index.codes, q)
    order = counting_sort(dist, index.d_latent + 1)
    return order, dist[order]


@njit(cache=True)
def _gather(order, offsets, ids, budget):
    out = np.empty(budget, dtype=np.int64)
    filled = 0
    for b in order:
        lo = offsets[b]
        hi = offsets[b + 1]
        for j in range(lo, hi):
            if filled == budget:
                return out
            out[filled] = ids[j]
            filled += 1
    return out[:filled]


@njit(cache=True)
def _row_sqdist(data, r, x):
    acc = 0.0
    for j in range(data.shape[1]):
        diff = np.float64(data[r, j]) - x[j]
        acc += diff * diff
    return acc


@njit(cache=True)
def sq_distances(data, rows, x):
    """Squared Euclidean distances from ``x`` to ``data[rows]`` (float64 sums)."""
    out = np.empty(len(rows))
    for i in range(len(rows)):
        out[i] = _row_sqdist(data, rows[i], x)
    return out


@njit(cache=True)
def sq_distances_all(data, x):
    out = np.empty(data.shape[0])
    for r in range(data.shape[0]):
        out[r] = _row_sqdist(data, r, x)
    return out


def select_k(ids, sqd, k):
    """Positions of the ``k`` smallest ``sqd`` (ties: smaller id) in result order."""
    if len(sqd) > k:
        kth = np.partition(sqd, k - 1)[k - 1]
        keep = np.flatnonzero(sqd <= kth)
    else:
        keep = np.arange(len(sqd))
    order = np.lexsort((ids[keep], sqd[keep]))[:k]
    return keep[order]


class QueryResult(NamedTuple):
    ids: np.ndarray
    distances: np.ndarray
    comparisons: int


@dataclass
class QueryConfig:
    k: int = 100
    c_max: int = 1000

    def __post_init__(self):
        if not 1 <= self.k <= self.c_max:
            raise ContractViolation(f"need 1 <= k <= c_max, got k={self.k}, c_max={self.c_max}")


def _as_query(x):
    return np.ascontiguousarray(np.asarray(x, dtype=np.float64).ravel())


def query_code(index: InvertedIndex, data, code, x, cfg: QueryConfig) -> QueryResult:
    """Refine candidates for an already hashed query."""
    order, _ = hamming_sorted_buckets(index, code)
    budget = min(cfg.c_max, index.n)
    cand = _gather(order, index.offsets, index.ids, budget)
    sqd = sq_distances(data, cand, _as_query(x))
    pick = select_k(cand, sqd, cfg.k)
    return QueryResult(cand[pick], np.sqrt(sqd[pick]), len(cand))


def query(index: InvertedIndex, data, model, x, cfg: QueryConfig) -> QueryResult:
    """Approximate k nearest rows of ``data`` to the raw vector ``x``.

    ``model`` must be the one whose codes built ``index``; ``data`` is the
    raw dataset addressed by row id.
    """
    code = hash_codes(model, np.atleast_2d(x))[0]
    return query_code(index, data, code, x, cfg)


def linear_search(data, x, k) -> QueryResult:
    """Exact k nearest rows by full scan, same tie rule as :func:`query`."""
    if not 1 <= k <= len(data):
        raise ContractViolation(f"k must be in [1, n], got {k}")
    sqd = sq_distances_all(data, _as_query(x))
    ids = np.arange(len(data), dtype=np.int64)
    pick = select_k(ids, sqd, k)
    return QueryResult(ids[pick], np.sqrt(sqd[pick]), len(data))


def index_to_bytes(index: InvertedIndex) -> bytes:
    m, n = index.m, index.n
    body = np.empty(2 * m + n, dtype="<u8")
    head_pos = index.offsets[:-1] + 2 * np.arange(m)
    body[head_pos] = index.codes
    body[head_pos + 1] = index.sizes()
    mask = np.ones(len(body), dtype=bool)
    mask[head_pos] = False
    mask[head_pos + 1] = False
    body[mask] = index.ids
    header = _IX_HEADER.pack(INDEX_MAGIC, INDEX_VERSION, index.d_latent, m, n)
    return header + body.tobytes()


def index_from_bytes(buf) -> InvertedIndex:
    if len(buf) < HEADER_BYTES:
        raise FormatError("truncated index header")
    magic, version, d_latent, m, n = _IX_HEADER.unpack_from(buf)
    if magic != INDEX_MAGIC:
        raise FormatError(f"bad index magic {magic!r}")
    if version != INDEX_VERSION:
        raise FormatError(f"unsupported index version {version}")
    if len(buf) != HEADER_BYTES + 8 * (2 * m + n):
        raise FormatError("index payload length does not match header")
    body = np.frombuffer(buf, dtype="<u8", offset=HEADER_BYTES)
    codes, offsets, ids, ok = _parse_records(body, m)
    if not ok or offsets[-1] != n:
        raise FormatError("bucket counts do not add up to n")
    return InvertedIndex(codes, offsets, ids, int(d_latent))


@njit(cache=True)
def _parse_records(body, m):
    codes = np.empty(m, dtype=np.uint64)
    offsets = np.zeros(m + 1, dtype=np.int64)
    ids = np.empty(max(len(body) - 2 * m, 0), dtype=np.int64)
    pos = 0
    for b in range(m):
        if pos + 2 > len(body):
            return codes, offsets, ids, False
        codes[b] = body[pos]
        count = np.int64(body[pos + 1])
        if count > len(body) - pos - 2:
            return codes, offsets, ids, False
        start = offsets[b]
        for j in range(count):
            ids[start + j] = np.int64(body[pos + 2 + j])
        offsets[b + 1] = start + count
        pos += 2 + count
    return codes, offsets, ids, pos == len(body)


def save_index(path, index: InvertedIndex) -> None:
    Path(path).write_bytes(index_to_bytes(index))


def load_index(path) -> InvertedIndex:
    return index_from_bytes(Path(path).read_bytes())


def memory_report(index: InvertedIndex) -> int:
    """Bytes needed for the index: header + 16 per bucket + 8 per row id."""
    return HEADER_BYTES + 16 * index.m + 8 * index.n
