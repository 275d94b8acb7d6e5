"""Sliding Window Unit: convolution lowering over the interleaved buffer.

A conv layer's feature map is held in one wide pixel-addressed memory
(pixel = all channel bits). Padding happens on the write side: addresses in
the border region receive the pad bit pattern (all channel bits 0, i.e. -1
in every channel), so the datapath between SWU and MVU stays exactly one
bit per synapse. Window vectors are emitted in output-raster order, which
is also the write order the next layer's buffer assumes.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ._kernels import kernels
from ._kernels.bitops import pack_bits, unpack_bits, words_needed
from .errors import UnsupportedPaddingError, ValidationError
from .model import BitTensor, LayerGeometry, LayerKind, Padding

KERNEL = 3


@dataclass(frozen=True)
class WindowPlan:
    """Read-address plan: for every output pixel, the k*k padded-buffer
    pixel addresses of its window, in (window-row, window-col) order."""

    ifm_dim: int
    padded_dim: int
    ofm_dim: int
    channels: int
    k: int
    pad: int
    read_addresses: np.ndarray  # (ofm_dim**2, k*k) int64, read-only

    @property
    def n_windows(self) -> int:
        return self.ofm_dim * self.ofm_dim

    @property
    def window_bits(self) -> int:
        return self.k * self.k * self.channels


@lru_cache(maxsize=None)
def build_window_plan(geometry: LayerGeometry) -> WindowPlan:
    """Address plan for one conv layer; padded pixel (r, c) lives at
    address r*padded_dim + c."""
    if geometry.kind is not LayerKind.CONV3X3:
        raise ValidationError("window plans exist for conv3x3 layers only")
    pad = geometry.pad
    padded = geometry.padded_dim
    ofm = padded - KERNEL + 1
    if ofm != geometry.ofm_dim:
        raise ValidationError("geometry ofm_dim does not match the window count")
    rows = np.arange(ofm)
    base = rows[:, None] * padded + rows[None, :]  # window origin address
    taps = (np.arange(KERNEL)[:, None] * padded + np.arange(KERNEL)[None, :]).reshape(-1)
    addrs = base.reshape(-1, 1) + taps[None, :]
    addrs = np.ascontiguousarray(addrs, np.int64)
    addrs.setflags(write=False)
    return WindowPlan(geometry.ifm_dim, padded, ofm, geometry.in_channels, KERNEL, pad, addrs)


def stream_pad_write(stream: BitTensor, geometry: LayerGeometry) -> BitTensor:
    """Fill the padded buffer from the incoming pixel stream.

    Emulates the write-side multiplexer: each buffer address is written
    exactly once, border addresses with the pad pattern (all channel bits
    unset) and interior addresses with the next stream pixel. With no
    padding the buffer is the input itself.
    """
    if geometry.kind is not LayerKind.CONV3X3:
        raise ValidationError("stream_pad_write applies to conv3x3 layers only")
    if geometry.padding is Padding.ZERO_ORACLE_ONLY:
        raise UnsupportedPaddingError(
            "zero padding has no bit pattern on the binary datapath; "
            "use the signed reference path (binfer.oracle) for comparison runs"
        )
    if (stream.height, stream.width, stream.channels) != (
        geometry.ifm_dim,
        geometry.ifm_dim,
        geometry.in_channels,
    ):
        raise ValidationError(
            f"stream {stream!r} does not match geometry {geometry.describe()}"
        )
    if geometry.pad == 0:
        return stream
    padded = geometry.padded_dim
    c = geometry.in_channels
    bits = np.zeros((padded, padded, c), np.uint8)
    bits[1:-1, 1:-1, :] = stream.to_bits().reshape(stream.height, stream.width, c)
    return BitTensor(padded, padded, c, pack_bits(bits.reshape(-1)))


def generate_image_matrix(buffer: BitTensor, plan: WindowPlan) -> np.ndarray:
    """Packed window vectors, one row per output pixel in raster order.

    Each row holds exactly k*k*channels bits: for every planned address in
    order, all channel bits of that pixel (interleaving preserved). Returned
    as a (n_windows, ceil(Y/64)) uint64 array ready for the MVU; there is no
    side-band, one bit crosses per synapse.
    """
    if (buffer.height, buffer.width, buffer.channels) != (
        plan.padded_dim,
        plan.padded_dim,
        plan.channels,
    ):
        raise ValidationError("buffer does not match the window plan")
    return kernels.gather_windows(
        buffer.words, plan.read_addresses, plan.channels, plan.padded_dim * plan.padded_dim
    )


def interleave_filters(filters: np.ndarray) -> np.ndarray:
    """Pack per-output-channel (3, 3, C) signed filters into weight rows.

    Bit order matches generate_image_matrix: (window position, channel),
    i.e. bit (3*kr + kc)*C + ch. Done offline, so it costs nothing at run
    time; a zero weight is rejected (the binary datapath admits none).
    """
    filters = np.asarray(filters)
    if filters.ndim != 4 or filters.shape[1:3] != (KERNEL, KERNEL):
        raise ValidationError("expected (out_channels, 3, 3, in_channels) filters")
    if not np.isin(filters, (-1, 1)).all():
        raise ValidationError("binary filters admit only -1 and +1 (no zero)")
    o = filters.shape[0]
    return pack_bits((filters > 0).astype(np.uint8).reshape(o, -1))


def deinterleave_filters(rows: np.ndarray, channels: int) -> np.ndarray:
    """Inverse of interleave_filters: packed rows back to (O, 3, 3, C) signs."""
    rows = np.asarray(rows, np.uint64)
    y = KERNEL * KERNEL * channels
    if rows.ndim != 2 or rows.shape[1] != words_needed(y):
        raise ValidationError("row shape does not match the channel count")
    bits = unpack_bits(rows, y).astype(np.int8)
    return (2 * bits - 1).reshape(rows.shape[0], KERNEL, KERNEL, channels)
