"""Binary max-pooling as Boolean OR over 2x2/stride-2 windows.

Pooling after binarization reduces max() to OR, so the packed interleaved
stream never leaves the 1-bit domain. Only 2x2/stride-2 is implemented (the
only pooling the cnn(sigma) family uses).
"""
from __future__ import annotations

import numpy as np

from ._kernels import kernels
from ._kernels.bitops import pack_bits, unpack_bits
from .errors import ValidationError
from .model import BitTensor


def or_pool(inp: BitTensor) -> BitTensor:
    """Per channel, output bit = OR of the four window bits; dims halve."""
    if inp.height % 2 or inp.width % 2:
        raise ValidationError("or_pool needs even height and width")
    words = kernels.or_pool(inp.words, inp.height, inp.width, inp.channels)
    return BitTensor(inp.height // 2, inp.width // 2, inp.channels, words)


class StreamingPooler:
    """Streaming form of or_pool: consumes raster rows, emits a pooled row
    after every second input row, holding at most 2 row buffers of
    width*channels bits each."""

    def __init__(self, width: int, channels: int):
        if width % 2:
            raise ValidationError("streaming pool needs an even row width")
        self.width = width
        self.channels = channels
        self.row_bits = width * channels
        self._buffers: list[np.ndarray] = []
        self.max_buffered_bits = 0

    def push_row(self, row_words: np.ndarray) -> np.ndarray | None:
        """Feed one packed row (width*channels bits); returns the pooled row
        (width/2*channels bits) once two rows have arrived, else None."""
        row_words = np.asarray(row_words, np.uint64)
        self._buffers.append(row_words)
        self.max_buffered_bits = max(self.max_buffered_bits, len(self._buffers) * self.row_bits)
        assert len(self._buffers) <= 2, "streaming pool must never hold more than 2 rows"
        if len(self._buffers) < 2:
            return None
        a, b = self._buffers
        self._buffers = []
        vert = a | b  # vertical subsampling is word-aligned
        bits = unpack_bits(vert, self.row_bits).reshape(self.width // 2, 2, self.channels)
        horiz = np.bitwise_or.reduce(bits, axis=1)
        return pack_bits(horiz.reshape(-1))

    def finish(self):
        if self._buffers:
            raise ValidationError("odd number of rows fed to the streaming pool")


def line_buffer_pool(rows, width: int, channels: int):
    """Pool a stream of packed raster rows; yields pooled rows.

    Produces results identical to :func:`or_pool` while never buffering more
    than 2 rows.
    """
    pooler = StreamingPooler(width, channels)
    for row in rows:
        out = pooler.push_row(row)
        if out is not None:
            yield out
    pooler.finish()


def tensor_rows(inp: BitTensor):
    """Iterate a tensor as packed rows of width*channels bits (test helper
    for driving the streaming pool)."""
    bits = inp.to_bits().reshape(inp.height, inp.width * inp.channels)
    for r in range(inp.height):
        yield pack_bits(bits[r])


def rows_to_tensor(rows, height: int, width: int, channels: int) -> BitTensor:
    """Reassemble packed rows into a tensor (inverse of tensor_rows)."""
    bits = [unpack_bits(r, width * channels) for r in rows]
    if len(bits) != height:
        raise ValidationError(f"expected {height} rows, got {len(bits)}")
    return BitTensor.from_bits(height, width, channels, np.concatenate(bits))
