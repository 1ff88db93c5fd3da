"""Bit strings of width <= 64 packed into one uint64 word (latent unit i -> bit i)."""

import numpy as np

from .errors import ContractViolation

MAX_WIDTH = 64


def pack_bits(bits) -> np.ndarray:
    """Pack rows of 0/1 values into uint64 codes; a 1-D input gives a scalar array."""
    bits = np.asarray(bits, dtype=np.uint8)
    d = bits.shape[-1]
    if d > MAX_WIDTH:
        raise ContractViolation(f"bit strings are limited to {MAX_WIDTH} bits, got {d}")
    packed = np.packbits(bits, axis=-1, bitorder="little")
    pad = 8 - packed.shape[-1]
    if pad:
        packed = np.concatenate(
            [packed, np.zeros(packed.shape[:-1] + (pad,), dtype=np.uint8)], axis=-1
        )
    return np.ascontiguousarray(packed).view("<u8")[..., 0].astype(np.uint64)


def unpack_bits(codes, width) -> np.ndarray:
    codes = np.asarray(codes, dtype="<u8")
    raw = codes[..., None].view(np.uint8)
    return np.unpackbits(raw, axis=-1, bitorder="little")[..., :width]


def hamming(codes, query) -> np.ndarray:
    """Popcount of ``codes XOR query``."""
    return np.bitwise_count(np.bitwise_xor(np.asarray(codes, dtype=np.uint64), np.uint64(query)))
