"""Pure-numpy kernel backend.

Functionally identical to the compiled core (``_core``); used as the
fallback when the extension is not built, and as the comparison point in
the kernel benchmark. All functions take and return plain numpy arrays;
packed rows follow the convention documented in :mod:`binfer._kernels.bitops`.

Threshold mode codes (shared with the compiled core):
  0  output +1 iff accumulator >= tau
  1  output +1 iff accumulator <= tau
  2  constant +1
  3  constant -1
"""
from __future__ import annotations

import numpy as np

from .bitops import pack_bits, tail_mask, unpack_bits

NAME = "python"

# Cap the (chunk, X, W) xnor intermediate at ~32 MB of uint64.
_CHUNK_WORDS = 4_000_000


def popcount(words: np.ndarray) -> int:
    return int(np.bitwise_count(np.asarray(words, dtype=np.uint64)).sum())


def xnor_popcount(a: np.ndarray, b: np.ndarray, y: int) -> int:
    """Popcount of the bitwise XNOR of two packed rows over their first y bits."""
    x = np.bitwise_not(np.asarray(a, np.uint64) ^ np.asarray(b, np.uint64))
    x[-1] &= np.uint64(tail_mask(y))
    return int(np.bitwise_count(x).sum())


def _xnor_popcounts(weights: np.ndarray, inputs: np.ndarray, y: int) -> np.ndarray:
    """(n, X) matrix of XNOR popcounts for every (input, weight-row) pair."""
    mask = np.uint64(tail_mask(y))
    n, x = inputs.shape[0], weights.shape[0]
    out = np.empty((n, x), np.int64)
    step = max(1, _CHUNK_WORDS // max(1, weights.size))
    for lo in range(0, n, step):
        blk = inputs[lo : lo + step, None, :] ^ weights[None, :, :]
        np.bitwise_not(blk, out=blk)
        blk[:, :, -1] &= mask
        out[lo : lo + step] = np.bitwise_count(blk).sum(axis=2, dtype=np.int64)
    return out


def _decide(acc: np.ndarray, tau: np.ndarray, mode: np.ndarray) -> np.ndarray:
    bits = np.where(mode == 0, acc >= tau, np.where(mode == 1, acc <= tau, mode == 2))
    return bits.astype(np.uint8)


def _pack_stream(bits2d: np.ndarray) -> np.ndarray:
    """Concatenate per-input decision rows into one flat packed bit stream."""
    return pack_bits(bits2d.reshape(-1))


def mvtu_bin_stream(
    weights: np.ndarray, inputs: np.ndarray, y: int, tau: np.ndarray, mode: np.ndarray
) -> np.ndarray:
    """Threshold decisions for n input vectors, emitted as one packed stream.

    Input i contributes bits [i*X, (i+1)*X) of the result, which is exactly
    the pixel-interleaved order the next layer consumes.
    """
    pop = _xnor_popcounts(weights, inputs, y)
    return _pack_stream(_decide(pop, tau, mode))


def mvtu_raw(weights: np.ndarray, inp: np.ndarray, y: int) -> np.ndarray:
    """Signed dot products 2*popcount - y for one input vector."""
    pop = _xnor_popcounts(weights, inp.reshape(1, -1), y)[0]
    return 2 * pop - y


def mvtu_fx_stream(
    weights: np.ndarray, pixels: np.ndarray, y: int, tau: np.ndarray, mode: np.ndarray
) -> np.ndarray:
    """Fixed-point execution: accumulate +/-pixel per weight bit, threshold.

    ``pixels`` is (n, y) int64. Accumulators are formed in float64 matmul,
    which is exact here (all intermediate values are integers far below
    2**53), then compared as integers.
    """
    signed = unpack_bits(weights, y).astype(np.float64) * 2.0 - 1.0
    acc = np.ascontiguousarray(pixels, np.float64) @ signed.T
    acc = acc.astype(np.int64)
    return _pack_stream(_decide(acc, tau, mode))


def gather_windows(
    buffer: np.ndarray, addrs: np.ndarray, channels: int, n_pixels: int
) -> np.ndarray:
    """Assemble packed window rows from a pixel-addressed bit buffer.

    ``addrs`` is (n_windows, k2) pixel addresses; each output row holds
    k2 * channels bits: the full channel slice of every addressed pixel, in
    address order.
    """
    addrs = np.asarray(addrs)
    n_win, k2 = addrs.shape
    bits = unpack_bits(buffer, n_pixels * channels).reshape(n_pixels, channels)
    win = bits[addrs.reshape(-1)].reshape(n_win, k2 * channels)
    return pack_bits(win)


def or_pool(words: np.ndarray, h: int, w: int, c: int) -> np.ndarray:
    """2x2/stride-2 Boolean OR pooling over a packed interleaved tensor."""
    bits = unpack_bits(words, h * w * c).reshape(h // 2, 2, w // 2, 2, c)
    pooled = np.bitwise_or.reduce(np.bitwise_or.reduce(bits, axis=3), axis=1)
    return pack_bits(pooled.reshape(-1))
