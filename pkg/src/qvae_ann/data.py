"""Datasets: synthetic generation, standardization and file formats.

Dataset file layout (little-endian)::

    b"QVDS" | version u32 | n u64 | d u32 | n*d float32, row-major
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractViolation, FormatError

DATASET_MAGIC = b"QVDS"
DATASET_VERSION = 1
_DS_HEADER = struct.Struct("<4sIQI")


def generate_synthetic(n, d, n_clusters, spread, seed=0):
    """Gaussian mixture with centres uniform in [-1, 1]^d.

    Returns ``(X, labels)`` with ``X`` float32 of shape (n, d).
    """
    if min(n, d, n_clusters) < 1:
        raise ContractViolation("n, d and n_clusters must be >= 1")
    rng = np.random.default_rng(seed)
    centres = rng.uniform(-1.0, 1.0, size=(n_clusters, d))
    labels = rng.integers(0, n_clusters, size=n)
    X = centres[labels] + spread * rng.standard_normal((n, d))
    return X.astype(np.float32), labels


@dataclass
class Scaler:
    mean: np.ndarray
    std: np.ndarray

    def transform(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.std

    def inverse(self, Xs) -> np.ndarray:
        return np.asarray(Xs, dtype=np.float64) * self.std + self.mean


def fit_scaler(X) -> Scaler:
    X = np.asarray(X, dtype=np.float64)
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    # constant columns map to zero with unit scale
    std = np.where(std > 0, std, 1.0)
    return Scaler(mean.astype(np.float32), std.astype(np.float32))


def standardize(X):
    """Per-feature ``(x - mean) / std``; returns ``(X_std, scaler)``."""
    scaler = fit_scaler(X)
    return scaler.transform(X), scaler


def dataset_to_bytes(X) -> bytes:
    X = np.ascontiguousarray(X, dtype="<f4")
    if X.ndim != 2:
        raise ContractViolation("dataset must be a 2-D array")
    if not np.all(np.isfinite(X)):
        raise ContractViolation("dataset entries must be finite")
    return _DS_HEADER.pack(DATASET_MAGIC, DATASET_VERSION, X.shape[0], X.shape[1]) + X.tobytes()


def save_dataset(path, X) -> None:
    Path(path).write_bytes(dataset_to_bytes(X))


def dataset_from_bytes(buf) -> np.ndarray:
    if len(buf) < _DS_HEADER.size:
        raise FormatError("truncated dataset header")
    magic, version, n, d = _DS_HEADER.unpack_from(buf)
    if magic != DATASET_MAGIC:
        raise FormatError(f"bad dataset magic {magic!r}")
    if version != DATASET_VERSION:
        raise FormatError(f"unsupported dataset version {version}")
    expected = _DS_HEADER.size + 4 * n * d
    if len(buf) != expected:
        raise FormatError(f"dataset payload is {len(buf)} bytes, expected {expected}")
    return np.frombuffer(buf, dtype="<f4", offset=_DS_HEADER.size).reshape(n, d).astype(np.float32)


def load_dataset(path) -> np.ndarray:
    return dataset_from_bytes(Path(path).read_bytes())


def load_csv(path) -> np.ndarray:
    """Headerless comma-separated numeric rows."""
    X = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    if not np.all(np.isfinite(X)):
        raise ContractViolation(f"{path}: non-finite values")
    return X.astype(np.float32)
