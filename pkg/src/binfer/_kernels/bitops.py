"""Bit packing helpers shared by every kernel backend.

Packing convention: element ``i`` of a bit sequence lives in bit ``i % 64``
(LSB first) of 64-bit little-endian word ``i // 64``. Bits past the logical
length of a sequence are always zero, so the final word of a well-formed
packed row can be popcounted after a single mask.
"""
from __future__ import annotations

import sys

import numpy as np

WORD_BITS = 64

if sys.byteorder != "little":  # pragma: no cover - packing relies on LE views
    raise ImportError("binfer requires a little-endian host")


def words_needed(bit_len: int) -> int:
    return (bit_len + WORD_BITS - 1) // WORD_BITS


def tail_mask(bit_len: int) -> int:
    """Mask selecting the valid bits of the final word of a packed row."""
    r = bit_len % WORD_BITS
    return (1 << r) - 1 if r else (1 << WORD_BITS) - 1


def pack_bits(bits: np.ndarray) -> np.ndarray:
    """Pack a 0/1 array into uint64 words along the last axis."""
    bits = np.ascontiguousarray(bits, dtype=np.uint8)
    by = np.packbits(bits, axis=-1, bitorder="little")
    pad = (-by.shape[-1]) % 8
    if pad:
        by = np.concatenate([by, np.zeros(by.shape[:-1] + (pad,), np.uint8)], axis=-1)
    return np.ascontiguousarray(by).view("<u8")


def unpack_bits(words: np.ndarray, bit_len: int) -> np.ndarray:
    """Inverse of :func:`pack_bits`; returns 0/1 uint8 of shape (..., bit_len)."""
    words = np.ascontiguousarray(words, dtype=np.uint64)
    bits = np.unpackbits(words.view(np.uint8), axis=-1, bitorder="little")
    return bits[..., :bit_len]
