"""Matrix-Vector-Threshold Unit: XNOR-popcount dot products, compilation of
bias + batch normalization + sign into a single integer comparison, and the
execution modes (binary, multi-vector, fixed-point input, raw output).

The engine computes with wide native integers; the hardware accumulator
width is modeled by :class:`AccumulatorSpec` for resource reports only.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ._kernels import kernels
from .errors import ValidationError
from .model import (
    PIXEL_MAX,
    BatchNormParams,
    BinaryLayer,
    BitTensor,
    Direction,
    IoMode,
    ThresholdEntry,
    ThresholdVector,
)


@dataclass(frozen=True)
class PopcountResult:
    """Popcount of an XNOR'ed row pair; the signed dot product is derived."""

    popcount: int
    y: int

    def __post_init__(self):
        if not 0 <= self.popcount <= self.y:
            raise ValidationError("popcount outside [0, y]")

    @property
    def dot(self) -> int:
        return 2 * self.popcount - self.y


@dataclass(frozen=True)
class AccumulatorSpec:
    """Hardware accumulator width T = 1 + ceil(log2(Y))."""

    t_bits: int

    @classmethod
    def for_synapses(cls, y: int) -> "AccumulatorSpec":
        if y < 1:
            raise ValidationError("synapse count must be positive")
        # ceil(log2(y)) via bit_length keeps this exact for all y.
        return cls(1 + (y - 1).bit_length())

    @property
    def max_count(self) -> int:
        return (1 << self.t_bits) - 1


def xnor_popcount(a: BitTensor, b: BitTensor, y: int) -> PopcountResult:
    """Popcount of the bitwise XNOR of two packed rows over their first y
    bits (the final word is masked)."""
    if a.bit_len != y or b.bit_len != y:
        raise ValidationError(f"both rows must have bit_len {y}")
    return PopcountResult(kernels.xnor_popcount(a.words, b.words, y), y)


def _sign(v: Fraction) -> int:
    return 1 if v >= 0 else -1


def _dot_threshold(gamma, beta, mu, sigma_bn, bias):
    """Exact rational threshold on the pre-activation a = dot + bias.

    Returns (positive_slope, theta) such that the batchnorm+sign decision is
    +1 iff dot >= theta (positive slope) or dot <= theta (negative slope),
    or (None, constant) when gamma is zero.
    """
    g, b, m, s, o = (Fraction(v) for v in (gamma, beta, mu, sigma_bn, bias))
    if s <= 0:
        raise ValidationError("sigma_bn must be positive")
    if g == 0:
        return None, _sign(b)
    slope = g / s
    theta = m - b / slope - o
    return slope > 0, theta


def compile_thresholds(bn: BatchNormParams, y: int) -> ThresholdVector:
    """Compile batchnorm+sign into popcount comparisons.

    With dot = 2c - y the rational dot threshold theta maps to the popcount
    domain as (theta + y) / 2; ceil/floor discretize it so that the integer
    comparison reproduces the exact decision for every popcount c in [0, y].
    tau_plus is clamped to [0, y+1] (0 = always +1 for at_least, y+1 = never);
    an at_most rule that can never fire is emitted as a constant instead,
    since its clamp endpoint would change the decision at c = 0.
    """
    entries = []
    for i in range(len(bn)):
        positive, theta = _dot_threshold(*bn.neuron(i))
        if positive is None:
            entries.append(ThresholdEntry(0, Direction.AT_LEAST, constant=theta))
            continue
        tc = (theta + y) / 2
        if positive:
            tau = max(0, min(math.ceil(tc), y + 1))
            entries.append(ThresholdEntry(tau, Direction.AT_LEAST))
        else:
            tau = math.floor(tc)
            if tau < 0:
                entries.append(ThresholdEntry(0, Direction.AT_MOST, constant=-1))
            else:
                entries.append(ThresholdEntry(min(tau, y + 1), Direction.AT_MOST))
    return ThresholdVector(entries)


def compile_fixedpoint_thresholds(
    bn: BatchNormParams, y: int, pixel_max: int = PIXEL_MAX
) -> ThresholdVector:
    """Compile batchnorm+sign for the fixed-point input layer.

    Here the comparison is against the signed accumulator itself (no
    popcount transform); tau_plus lives in [-pixel_max*y, pixel_max*y + 1].
    """
    lo, hi = -pixel_max * y, pixel_max * y + 1
    entries = []
    for i in range(len(bn)):
        positive, theta = _dot_threshold(*bn.neuron(i))
        if positive is None:
            entries.append(ThresholdEntry(0, Direction.AT_LEAST, constant=theta))
        elif positive:
            entries.append(ThresholdEntry(max(lo, min(math.ceil(theta), hi)), Direction.AT_LEAST))
        else:
            tau = math.floor(theta)
            if tau < lo:
                entries.append(ThresholdEntry(0, Direction.AT_MOST, constant=-1))
            else:
                entries.append(ThresholdEntry(min(tau, hi), Direction.AT_MOST))
    return ThresholdVector(entries)


def _require_mode(layer: BinaryLayer, mode: IoMode, op: str):
    if layer.io_mode is not mode:
        raise ValidationError(f"{op} requires io_mode {mode.value}, layer has {layer.io_mode.value}")


def _check_input(layer: BinaryLayer, vec: BitTensor):
    if vec.bit_len != layer.synapses:
        raise ValidationError(
            f"input bit_len {vec.bit_len} does not match Y = {layer.synapses}"
        )


def mvtu_execute(layer: BinaryLayer, vec: BitTensor) -> BitTensor:
    """One binary matrix-vector product plus thresholding: output bit i is
    threshold entry i applied to the XNOR popcount of weight row i."""
    _require_mode(layer, IoMode.BINARY, "mvtu_execute")
    _check_input(layer, vec)
    thr = layer.thresholds
    words = kernels.mvtu_bin_stream(
        layer.weight_words, vec.words.reshape(1, -1), layer.synapses, thr.tau, thr.mode
    )
    return BitTensor(1, 1, layer.neurons, words)


def mvtu_execute_multi(layer: BinaryLayer, vecs) -> list[BitTensor]:
    """Matrix-multiple-vector execution: M vectors against one weight fetch.

    Models the MMV datapath (weights read once per row, M accumulation lanes);
    the result equals mvtu_execute applied to each vector independently and
    no ordering between lanes is defined.
    """
    vecs = list(vecs)
    if not vecs:
        raise ValidationError("mvtu_execute_multi needs at least one vector")
    _require_mode(layer, IoMode.BINARY, "mvtu_execute_multi")
    for v in vecs:
        _check_input(layer, v)
    thr = layer.thresholds
    x = layer.neurons
    out = []
    for v in vecs:
        words = kernels.mvtu_bin_stream(
            layer.weight_words, v.words.reshape(1, -1), layer.synapses, thr.tau, thr.mode
        )
        out.append(BitTensor(1, 1, x, words))
    return out


def mvtu_fixedpoint(layer: BinaryLayer, pixels: np.ndarray) -> BitTensor:
    """Partial binarization for non-binary inputs: accumulate +/-pixel per
    weight bit (add/subtract instead of XNOR-popcount), then threshold the
    signed accumulator directly."""
    _require_mode(layer, IoMode.FIXEDPOINT_IN, "mvtu_fixedpoint")
    pixels = np.asarray(pixels, dtype=np.int64)
    if pixels.shape != (layer.synapses,):
        raise ValidationError(f"expected {layer.synapses} pixels, got {pixels.shape}")
    if pixels.min(initial=0) < 0 or pixels.max(initial=0) > PIXEL_MAX:
        raise ValidationError("pixels must be 8-bit unsigned values")
    thr = layer.thresholds
    words = kernels.mvtu_fx_stream(
        layer.weight_words, pixels.reshape(1, -1), layer.synapses, thr.tau, thr.mode
    )
    return BitTensor(1, 1, layer.neurons, words)


def mvtu_raw(layer: BinaryLayer, vec: BitTensor) -> np.ndarray:
    """Thresholding removed: signed dot products 2c - Y per neuron."""
    _require_mode(layer, IoMode.RAW_OUT, "mvtu_raw")
    _check_input(layer, vec)
    return kernels.mvtu_raw(layer.weight_words, vec.words, layer.synapses)
