"""Domain types: packed binary tensors, layer geometry, threshold records,
the cnn(sigma) topology family and random model generation.

Encoding conventions
--------------------
* A set bit encodes +1, an unset bit encodes -1.
* Feature maps are channel-interleaved: element (row, col, ch) lives at flat
  bit index (row*width + col)*channels + ch, so one "pixel" is a contiguous
  run of ``channels`` bits and flattening a map for a fully-connected layer
  is a no-op on the packed words.
* Convolution weight rows use the matching order: bit (tap*channels + ch)
  for tap = 3*kr + kc over the 3x3 window.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction

import numpy as np

from ._kernels.bitops import pack_bits, tail_mask, unpack_bits, words_needed
from .errors import ValidationError

PIXEL_MAX = 255  # unsigned 8-bit input pixels, treated as integers 0..255

#: Unscaled layer widths of the cnn(1) family: three conv groups and the
#: fully-connected tail, all multiplied by sigma.
CONV_BASE_WIDTHS = (128, 128, 256, 256, 512, 512)
FC_BASE_WIDTHS = (1024, 1024)
INPUT_DIM = 32
INPUT_CHANNELS = 3
NUM_CLASSES = 10


class LayerKind(str, Enum):
    CONV3X3 = "conv3x3"
    FULLY_CONNECTED = "fully_connected"
    MAXPOOL2X2 = "maxpool2x2"


class Padding(str, Enum):
    NONE = "none"
    NEG_ONE = "neg_one"
    # Representable for signed-reference comparison runs only; the packed
    # engine rejects it (no bit pattern for 0).
    ZERO_ORACLE_ONLY = "zero_oracle_only"


class IoMode(str, Enum):
    BINARY = "binary_in_binary_out"
    FIXEDPOINT_IN = "fixedpoint_in"
    RAW_OUT = "raw_out"


class Direction(str, Enum):
    AT_LEAST = "at_least"
    AT_MOST = "at_most"


def flat_index(row: int, col: int, ch: int, width: int, channels: int) -> int:
    """Channel-interleaved flat index of element (row, col, ch)."""
    return (row * width + col) * channels + ch


class BitTensor:
    """Bit-packed, channel-interleaved binary tensor (set bit = +1).

    Immutable: the word array is marked read-only at construction and all
    operations return new tensors, so instances are safe to share between
    threads.
    """

    __slots__ = ("height", "width", "channels", "bit_len", "words")

    def __init__(self, height: int, width: int, channels: int, words: np.ndarray):
        if height < 1 or width < 1 or channels < 1:
            raise ValidationError("BitTensor dimensions must be positive")
        bit_len = height * width * channels
        words = np.ascontiguousarray(words, dtype=np.uint64)
        if words.ndim != 1 or words.shape[0] != words_needed(bit_len):
            raise ValidationError(
                f"expected {words_needed(bit_len)} words for {bit_len} bits, "
                f"got shape {words.shape}"
            )
        if words[-1] & ~np.uint64(tail_mask(bit_len)):
            raise ValidationError("bits beyond bit_len must be zero")
        words.setflags(write=False)
        self.height = height
        self.width = width
        self.channels = channels
        self.bit_len = bit_len
        self.words = words

    @classmethod
    def from_bits(cls, height: int, width: int, channels: int, bits: np.ndarray) -> "BitTensor":
        """Build from a flat (or (h, w, c)-shaped) 0/1 array in interleaved order."""
        bits = np.asarray(bits, dtype=np.uint8).reshape(-1)
        if bits.size != height * width * channels:
            raise ValidationError("bit count does not match dimensions")
        return cls(height, width, channels, pack_bits(bits))

    @classmethod
    def from_signed(cls, values: np.ndarray) -> "BitTensor":
        """Build from an (h, w, c) array over {-1, +1}."""
        values = np.asarray(values)
        if values.ndim != 3:
            raise ValidationError("expected a (height, width, channels) array")
        if not np.isin(values, (-1, 1)).all():
            raise ValidationError("binary tensors admit only -1 and +1")
        h, w, c = values.shape
        return cls.from_bits(h, w, c, (values > 0).astype(np.uint8))

    @classmethod
    def zeros(cls, height: int, width: int, channels: int) -> "BitTensor":
        n = words_needed(height * width * channels)
        return cls(height, width, channels, np.zeros(n, np.uint64))

    def to_bits(self) -> np.ndarray:
        """Flat 0/1 uint8 view of the valid bits."""
        return unpack_bits(self.words, self.bit_len)

    def to_signed(self) -> np.ndarray:
        """(h, w, c) int8 array over {-1, +1}."""
        bits = self.to_bits().astype(np.int8)
        return (2 * bits - 1).reshape(self.height, self.width, self.channels)

    def get(self, row: int, col: int, ch: int) -> int:
        idx = flat_index(row, col, ch, self.width, self.channels)
        word = int(self.words[idx >> 6])
        return 1 if (word >> (idx & 63)) & 1 else -1

    def as_vector(self) -> "BitTensor":
        """Flattened (1, 1, h*w*c) view sharing the same words.

        Flattening is free because the interleaved layout already stores
        elements in (row, col, ch) raster order.
        """
        if self.height == 1 and self.width == 1:
            return self
        return BitTensor(1, 1, self.bit_len, self.words)

    def __eq__(self, other) -> bool:
        if not isinstance(other, BitTensor):
            return NotImplemented
        return (
            (self.height, self.width, self.channels) == (other.height, other.width, other.channels)
            and bool(np.array_equal(self.words, other.words))
        )

    def __hash__(self):
        return hash((self.height, self.width, self.channels, self.words.tobytes()))

    def __repr__(self):
        return f"BitTensor({self.height}x{self.width}x{self.channels})"


@dataclass(frozen=True)
class LayerGeometry:
    """Shape contract of one layer.

    For fully-connected layers ``in_channels`` is the flattened input length
    (= synapses_per_neuron) and both feature-map dimensions are 1.
    """

    kind: LayerKind
    in_channels: int
    out_channels: int
    synapses_per_neuron: int
    ifm_dim: int
    ofm_dim: int
    padding: Padding

    def __post_init__(self):
        k, y = self.kind, self.synapses_per_neuron
        if min(self.in_channels, self.out_channels, self.ifm_dim, self.ofm_dim) < 1:
            raise ValidationError(f"{k.value}: dimensions must be positive")
        if k is LayerKind.CONV3X3:
            if y != 9 * self.in_channels:
                raise ValidationError(f"conv3x3: Y must be 9*in_channels, got {y}")
            if self.padding is Padding.NONE:
                if self.ifm_dim < 3:
                    raise ValidationError("conv3x3 without padding needs ifm_dim >= 3")
                if self.ofm_dim != self.ifm_dim - 2:
                    raise ValidationError("conv3x3 unpadded: ofm_dim must be ifm_dim - 2")
            elif self.ofm_dim != self.ifm_dim:
                raise ValidationError("conv3x3 padded: ofm_dim must equal ifm_dim")
        elif k is LayerKind.FULLY_CONNECTED:
            if y != self.in_channels:
                raise ValidationError("fully_connected: Y must equal in_channels")
            if self.ifm_dim != 1 or self.ofm_dim != 1:
                raise ValidationError("fully_connected: feature-map dims must be 1")
        elif k is LayerKind.MAXPOOL2X2:
            if self.ifm_dim % 2:
                raise ValidationError("maxpool2x2: ifm_dim must be even")
            if self.ofm_dim != self.ifm_dim // 2:
                raise ValidationError("maxpool2x2: ofm_dim must be ifm_dim / 2")
            if self.in_channels != self.out_channels:
                raise ValidationError("maxpool2x2: channels are preserved")

    @property
    def neurons(self) -> int:
        """X: weight-matrix rows (conv: output channels)."""
        return self.out_channels

    @property
    def pad(self) -> int:
        return 1 if self.kind is LayerKind.CONV3X3 and self.padding is not Padding.NONE else 0

    @property
    def padded_dim(self) -> int:
        return self.ifm_dim + 2 * self.pad

    @property
    def ofm_pixels(self) -> int:
        """F^m: matrix-vector products per frame (1 for fully-connected)."""
        if self.kind is LayerKind.FULLY_CONNECTED:
            return 1
        return self.ofm_dim * self.ofm_dim

    def describe(self) -> str:
        if self.kind is LayerKind.CONV3X3:
            return f"conv3x3 {self.in_channels}->{self.out_channels} @{self.ifm_dim}->{self.ofm_dim}"
        if self.kind is LayerKind.FULLY_CONNECTED:
            return f"fc {self.synapses_per_neuron}->{self.out_channels}"
        return f"maxpool2x2 {self.in_channels}ch @{self.ifm_dim}->{self.ofm_dim}"


# Threshold mode codes shared with the kernel backends.
MODE_AT_LEAST = 0
MODE_AT_MOST = 1
MODE_CONST_POS = 2
MODE_CONST_NEG = 3


@dataclass(frozen=True)
class ThresholdEntry:
    """One neuron's activation rule: a comparison against tau_plus, or a
    fixed output when the batchnorm parameters degenerate."""

    tau_plus: int
    direction: Direction
    constant: int | None = None

    def __post_init__(self):
        if self.constant not in (None, -1, 1):
            raise ValidationError("constant output must be -1 or +1")

    @property
    def mode(self) -> int:
        if self.constant is not None:
            return MODE_CONST_POS if self.constant > 0 else MODE_CONST_NEG
        return MODE_AT_LEAST if self.direction is Direction.AT_LEAST else MODE_AT_MOST

    def decide(self, acc: int) -> int:
        """Apply the rule to an accumulator value; returns +1 or -1."""
        if self.constant is not None:
            return self.constant
        if self.direction is Direction.AT_LEAST:
            return 1 if acc >= self.tau_plus else -1
        return 1 if acc <= self.tau_plus else -1


class ThresholdVector:
    """Per-neuron threshold entries plus their kernel-ready array form."""

    __slots__ = ("entries", "tau", "mode")

    def __init__(self, entries):
        self.entries = tuple(entries)
        if not self.entries:
            raise ValidationError("threshold vector must not be empty")
        tau = np.array([e.tau_plus for e in self.entries], np.int64)
        mode = np.array([e.mode for e in self.entries], np.uint8)
        tau.setflags(write=False)
        mode.setflags(write=False)
        self.tau = tau
        self.mode = mode

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    def __eq__(self, other):
        if not isinstance(other, ThresholdVector):
            return NotImplemented
        return self.entries == other.entries

    def __hash__(self):
        return hash(self.entries)

    def __repr__(self):
        return f"ThresholdVector(n={len(self.entries)})"


@dataclass(frozen=True)
class BatchNormParams:
    """Per-neuron batch normalization parameters plus the folded layer bias.

    Values may be ints, Fractions or floats; all downstream comparisons are
    exact (floats are converted to their exact binary rational).
    """

    gamma: tuple
    beta: tuple
    mu: tuple
    sigma_bn: tuple
    bias: tuple

    def __post_init__(self):
        n = len(self.gamma)
        if not all(len(v) == n for v in (self.beta, self.mu, self.sigma_bn, self.bias)):
            raise ValidationError("batchnorm parameter vectors must share one length")
        if any(Fraction(s) <= 0 for s in self.sigma_bn):
            raise ValidationError("sigma_bn must be positive for every neuron")

    def __len__(self):
        return len(self.gamma)

    def neuron(self, i: int) -> tuple:
        return (self.gamma[i], self.beta[i], self.mu[i], self.sigma_bn[i], self.bias[i])


def _threshold_bounds(io_mode: IoMode, y: int) -> tuple[int, int]:
    """Valid tau_plus range: popcount domain for binary layers, signed
    accumulator domain for the fixed-point input layer."""
    if io_mode is IoMode.FIXEDPOINT_IN:
        return -PIXEL_MAX * y, PIXEL_MAX * y + 1
    return 0, y + 1


class BinaryLayer:
    """Geometry + packed weight rows + compiled thresholds of one MVU layer.

    ``bn`` optionally retains the batchnorm parameters the thresholds were
    compiled from; it is used by the signed reference path, excluded from
    equality and never serialized.
    """

    __slots__ = ("geometry", "weight_words", "thresholds", "io_mode", "bn")

    def __init__(
        self,
        geometry: LayerGeometry,
        weight_words: np.ndarray,
        thresholds: ThresholdVector | None,
        io_mode: IoMode,
        bn: BatchNormParams | None = None,
    ):
        if geometry.kind is LayerKind.MAXPOOL2X2:
            raise ValidationError("pooling layers carry no weights")
        x, y = geometry.neurons, geometry.synapses_per_neuron
        w = words_needed(y)
        weight_words = np.ascontiguousarray(weight_words, dtype=np.uint64)
        if weight_words.shape != (x, w):
            raise ValidationError(
                f"expected weight shape ({x}, {w}), got {weight_words.shape}"
            )
        if (weight_words[:, -1] & ~np.uint64(tail_mask(y))).any():
            raise ValidationError("weight row bits beyond Y must be zero")
        if io_mode is IoMode.RAW_OUT:
            if thresholds is not None:
                raise ValidationError("raw-output layers carry no thresholds")
        else:
            if thresholds is None or len(thresholds) != x:
                raise ValidationError(f"expected {x} threshold entries")
            lo, hi = _threshold_bounds(io_mode, y)
            for i, e in enumerate(thresholds):
                if e.constant is None and not lo <= e.tau_plus <= hi:
                    raise ValidationError(
                        f"threshold {i}: tau_plus {e.tau_plus} outside [{lo}, {hi}]"
                    )
        if bn is not None and len(bn) != x:
            raise ValidationError("batchnorm length must match neuron count")
        weight_words.setflags(write=False)
        self.geometry = geometry
        self.weight_words = weight_words
        self.thresholds = thresholds
        self.io_mode = io_mode
        self.bn = bn

    @property
    def neurons(self) -> int:
        return self.geometry.neurons

    @property
    def synapses(self) -> int:
        return self.geometry.synapses_per_neuron

    def __eq__(self, other):
        if not isinstance(other, BinaryLayer):
            return NotImplemented
        return (
            self.geometry == other.geometry
            and self.io_mode == other.io_mode
            and self.thresholds == other.thresholds
            and bool(np.array_equal(self.weight_words, other.weight_words))
        )

    def __repr__(self):
        return f"BinaryLayer({self.geometry.describe()}, {self.io_mode.value})"


def dense_weights_signed(layer: BinaryLayer) -> np.ndarray:
    """(X, Y) signed weight matrix decoded from the packed rows."""
    bits = unpack_bits(layer.weight_words, layer.synapses).astype(np.int8)
    return 2 * bits - 1


def conv_filters_signed(layer: BinaryLayer) -> np.ndarray:
    """(X, 3, 3, C) signed filters decoded from the interleaved rows."""
    if layer.geometry.kind is not LayerKind.CONV3X3:
        raise ValidationError("not a convolution layer")
    c = layer.geometry.in_channels
    return dense_weights_signed(layer).reshape(layer.neurons, 3, 3, c)


def pack_dense_weights(matrix: np.ndarray) -> np.ndarray:
    """Pack an (X, Y) matrix over {-1, +1} into weight rows."""
    matrix = np.asarray(matrix)
    if not np.isin(matrix, (-1, 1)).all():
        raise ValidationError("binary weights admit only -1 and +1")
    return pack_bits((matrix > 0).astype(np.uint8))


@dataclass(frozen=True)
class InputSpec:
    dim: int = INPUT_DIM
    channels: int = INPUT_CHANNELS
    bits: int = 8


@dataclass(frozen=True)
class Topology:
    """Ordered layer geometries of one network plus its scale and padding mode."""

    name: str
    sigma: Fraction
    padding: Padding
    layers: tuple[LayerGeometry, ...]
    input: InputSpec = InputSpec()
    classes: int = NUM_CLASSES

    def __post_init__(self):
        # Adjacent layers must be dimension-compatible.
        prev: LayerGeometry | None = None
        for i, g in enumerate(self.layers):
            if prev is not None:
                if g.kind is LayerKind.FULLY_CONNECTED:
                    expect = prev.ofm_dim * prev.ofm_dim * prev.out_channels
                    if prev.kind is LayerKind.FULLY_CONNECTED:
                        expect = prev.out_channels
                    if g.in_channels != expect:
                        raise ValidationError(f"layer {i}: expects {expect} inputs")
                else:
                    if g.ifm_dim != prev.ofm_dim or g.in_channels != prev.out_channels:
                        raise ValidationError(f"layer {i}: shape mismatch with layer {i-1}")
            prev = g

    def labels(self) -> tuple[str, ...]:
        counts = {LayerKind.CONV3X3: 0, LayerKind.FULLY_CONNECTED: 0, LayerKind.MAXPOOL2X2: 0}
        short = {LayerKind.CONV3X3: "conv", LayerKind.FULLY_CONNECTED: "fc", LayerKind.MAXPOOL2X2: "pool"}
        out = []
        for g in self.layers:
            counts[g.kind] += 1
            out.append(f"{short[g.kind]}{counts[g.kind]}")
        return tuple(out)

    def mvu_layers(self) -> list[tuple[int, LayerGeometry]]:
        """(index, geometry) of every compute layer, pooling excluded."""
        return [(i, g) for i, g in enumerate(self.layers) if g.kind is not LayerKind.MAXPOOL2X2]


def _scaled_width(base: int, sigma: Fraction) -> int:
    w = base * sigma
    if w.denominator != 1 or w < 1:
        raise ValidationError(
            f"non-integral channel count: {base}*{sigma} = {w}"
        )
    return int(w)


def build_topology(sigma, padding: Padding | str = Padding.NEG_ONE) -> Topology:
    """Construct the cnn(sigma) topology: three (conv-conv-pool) groups of
    width 128/128, 256/256, 512/512 scaled by sigma, then fully-connected
    layers of 1024*sigma, 1024*sigma and 10.

    Without padding the feature map shrinks by 2 per convolution; a pool is
    emitted after a group only when the running dimension is still even and
    at least 2 (the third group ends at 1x1, so its pool is dropped).
    """
    sigma = Fraction(sigma)
    padding = Padding(padding)
    if padding is Padding.ZERO_ORACLE_ONLY:
        raise ValidationError("zero padding is available on the signed reference path only")
    conv_w = [_scaled_width(b, sigma) for b in CONV_BASE_WIDTHS]
    fc_w = [_scaled_width(b, sigma) for b in FC_BASE_WIDTHS]

    layers: list[LayerGeometry] = []
    dim = INPUT_DIM
    in_ch = INPUT_CHANNELS
    for gi in range(3):
        for li in range(2):
            out_ch = conv_w[2 * gi + li]
            ofm = dim if padding is Padding.NEG_ONE else dim - 2
            layers.append(
                LayerGeometry(LayerKind.CONV3X3, in_ch, out_ch, 9 * in_ch, dim, ofm, padding)
            )
            dim, in_ch = ofm, out_ch
        if dim >= 2 and dim % 2 == 0:
            layers.append(
                LayerGeometry(LayerKind.MAXPOOL2X2, in_ch, in_ch, 0, dim, dim // 2, Padding.NONE)
            )
            dim //= 2
    flat = dim * dim * in_ch
    widths = [flat, *fc_w, NUM_CLASSES]
    for i in range(3):
        layers.append(
            LayerGeometry(
                LayerKind.FULLY_CONNECTED, widths[i], widths[i + 1], widths[i], 1, 1, Padding.NONE
            )
        )
    return Topology(name=f"cnn({sigma})", sigma=sigma, padding=padding, layers=tuple(layers))


def _rand_fraction(rng, num_lo: int, num_hi: int, den_hi: int = 4) -> Fraction:
    return Fraction(int(rng.integers(num_lo, num_hi + 1)), int(rng.integers(1, den_hi + 1)))


def _random_bn(rng, geometry: LayerGeometry, io_mode: IoMode) -> BatchNormParams:
    x, y = geometry.neurons, geometry.synapses_per_neuron
    # mu and bias are drawn on the statistical scale of the layer's
    # accumulator (sd ~ sqrt(y) for binary dots, ~147*sqrt(y) for 8-bit
    # pixels) so most neurons make real input-dependent decisions; a small
    # fraction is drawn far out of range to keep the clamp paths exercised.
    if io_mode is IoMode.FIXEDPOINT_IN:
        mu_span, bias_span = 300 * math.isqrt(y), 100 * math.isqrt(y)
        wide_span = 2 * PIXEL_MAX * y
    else:
        mu_span, bias_span = 2 * math.isqrt(y), math.isqrt(y)
        wide_span = 2 * y
    gamma, beta, mu, sigma_bn, bias = [], [], [], [], []
    for _ in range(x):
        gamma.append(_rand_fraction(rng, -8, 8))  # zero allowed: constant outputs
        beta.append(_rand_fraction(rng, -8, 8))
        span = wide_span if rng.integers(0, 8) == 0 else mu_span
        mu.append(_rand_fraction(rng, -span, span))
        sigma_bn.append(_rand_fraction(rng, 1, 8))
        bias.append(_rand_fraction(rng, -bias_span, bias_span))
    return BatchNormParams(tuple(gamma), tuple(beta), tuple(mu), tuple(sigma_bn), tuple(bias))


def layer_io_modes(topology: Topology) -> list[IoMode]:
    """Io mode per compute layer: 8-bit input first, raw-score head last."""
    mvu = topology.mvu_layers()
    modes = [IoMode.BINARY] * len(mvu)
    modes[0] = IoMode.FIXEDPOINT_IN
    modes[-1] = IoMode.RAW_OUT
    return modes


def generate_random_model(topology: Topology, seed: int) -> list[BinaryLayer]:
    """Deterministic random model: uniform weight bits and random rational
    batchnorm parameters compiled to thresholds.

    Training is out of scope; random weights exist to exercise the datapath,
    and the returned layers keep their batchnorm source so the signed
    reference path can check them.
    """
    from .mvtu import compile_fixedpoint_thresholds, compile_thresholds

    rng = np.random.default_rng(seed)
    layers: list[BinaryLayer] = []
    modes = layer_io_modes(topology)
    for (_, g), io_mode in zip(topology.mvu_layers(), modes):
        x, y = g.neurons, g.synapses_per_neuron
        bits = rng.integers(0, 2, size=(x, y), dtype=np.uint8)
        words = pack_bits(bits)
        if io_mode is IoMode.RAW_OUT:
            layers.append(BinaryLayer(g, words, None, io_mode))
            continue
        bn = _random_bn(rng, g, io_mode)
        if io_mode is IoMode.FIXEDPOINT_IN:
            thr = compile_fixedpoint_thresholds(bn, y)
        else:
            thr = compile_thresholds(bn, y)
        layers.append(BinaryLayer(g, words, thr, io_mode, bn=bn))
    return layers
