"""Signed-arithmetic reference implementations.

Everything here works on small signed integers over {-1, 0, +1} (zeros only
as padding) and exact rational batchnorm comparisons; it is the ground truth
the packed-bit engine is checked against, and it deliberately shares none of
the engine's lowering, packing or threshold-compilation machinery.

Pre-activations are accumulated with float64 matrix products, which is exact
for this domain (every intermediate value is an integer far below 2**53);
the sign decision itself is evaluated with cross-multiplied integers, so no
comparison ever depends on floating-point rounding. sign(0) = +1 throughout.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .errors import ValidationError
from .model import (
    BatchNormParams,
    BinaryLayer,
    IoMode,
    LayerKind,
    Padding,
    conv_filters_signed,
    dense_weights_signed,
)


class SignedTensor:
    """(h, w, c) tensor over {-1, 0, +1}; zeros appear only via zero-padding."""

    __slots__ = ("height", "width", "channels", "values")

    def __init__(self, values: np.ndarray):
        values = np.asarray(values, dtype=np.int8)
        if values.ndim != 3:
            raise ValidationError("expected a (height, width, channels) array")
        if not np.isin(values, (-1, 0, 1)).all():
            raise ValidationError("signed tensors admit only -1, 0 and +1")
        values.setflags(write=False)
        self.height, self.width, self.channels = values.shape
        self.values = values

    def __eq__(self, other):
        if not isinstance(other, SignedTensor):
            return NotImplemented
        return bool(np.array_equal(self.values, other.values))

    def __repr__(self):
        return f"SignedTensor({self.height}x{self.width}x{self.channels})"


def binarize(values: np.ndarray) -> np.ndarray:
    """sign() with sign(0) = +1, elementwise."""
    return np.where(np.asarray(values) >= 0, 1, -1).astype(np.int8)


@dataclass(frozen=True)
class _DecisionTable:
    """Per-neuron exact sign decision on integer pre-activations.

    For neuron j with slope s = gamma/sigma the decision sign(s*(a - mu) + beta)
    reduces to comparing a against the rational theta = mu - beta/s - bias
    (bias folded into theta so `a` is the plain integer dot product). The
    comparison a >= theta is evaluated as a*theta.den >= theta.num.
    """

    num: np.ndarray  # theta numerator per neuron
    den: np.ndarray  # theta denominator per neuron (positive)
    positive: np.ndarray  # bool: slope > 0
    const: np.ndarray  # int8: 0 = compare, else fixed +1/-1

    @classmethod
    def from_bn(cls, bn: BatchNormParams) -> "_DecisionTable":
        n = len(bn)
        num = np.zeros(n, np.int64)
        den = np.ones(n, np.int64)
        positive = np.zeros(n, bool)
        const = np.zeros(n, np.int8)
        for j in range(n):
            g, b, m, s, o = (Fraction(v) for v in bn.neuron(j))
            if s <= 0:
                raise ValidationError("sigma_bn must be positive")
            if g == 0:
                const[j] = 1 if b >= 0 else -1
                continue
            slope = g / s
            theta = m - b / slope - o
            num[j] = theta.numerator
            den[j] = theta.denominator
            positive[j] = slope > 0
        return cls(num, den, positive, const)

    def decide(self, pre: np.ndarray) -> np.ndarray:
        """Apply to an (..., n) integer pre-activation array; returns int8 +/-1."""
        lhs = pre.astype(np.int64) * self.den
        ge = lhs >= self.num
        le = lhs <= self.num
        out = np.where(self.positive, ge, le)
        out = np.where(out, 1, -1).astype(np.int8)
        return np.where(self.const != 0, self.const, out)


@lru_cache(maxsize=4096)
def _table_for(bn: BatchNormParams) -> _DecisionTable:
    return _DecisionTable.from_bn(bn)


def _exact_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Integer matrix product via float64 (exact: values stay below 2**53)."""
    out = np.asarray(a, np.float64) @ np.asarray(b, np.float64)
    return out.astype(np.int64)


def oracle_dense(weights: np.ndarray, x: np.ndarray, bn: BatchNormParams) -> np.ndarray:
    """a = W.x + bias, then sign(gamma*(a - mu)/sigma + beta); output int8 +/-1."""
    weights = np.asarray(weights)
    x = np.asarray(x).reshape(-1)
    if weights.ndim != 2 or weights.shape[1] != x.shape[0]:
        raise ValidationError(f"weight shape {weights.shape} does not match input {x.shape}")
    if weights.shape[0] != len(bn):
        raise ValidationError("batchnorm length must match neuron count")
    pre = _exact_matmul(weights, x)
    return _table_for(bn).decide(pre)


def oracle_raw_dense(weights: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Raw integer scores W.x (no bias, no thresholding)."""
    weights = np.asarray(weights)
    x = np.asarray(x).reshape(-1)
    if weights.shape[1] != x.shape[0]:
        raise ValidationError("dimension mismatch")
    return _exact_matmul(weights, x)


def _conv_pre(filters: np.ndarray, values: np.ndarray, pad_value) -> np.ndarray:
    """Direct (non-lowered) 3x3 convolution pre-activations.

    ``values`` is any (h, w, c) integer array; ``pad_value`` is None or the
    constant written into a one-pixel border.
    """
    filters = np.asarray(filters)
    if filters.ndim != 4 or filters.shape[1:3] != (3, 3):
        raise ValidationError("expected (out_channels, 3, 3, in_channels) filters")
    if filters.shape[3] != values.shape[2]:
        raise ValidationError("filter channels do not match input channels")
    if pad_value is not None:
        values = np.pad(values, ((1, 1), (1, 1), (0, 0)), constant_values=pad_value)
    h, w, c = values.shape
    if h < 3 or w < 3:
        raise ValidationError("input too small for a 3x3 window")
    oh, ow = h - 2, w - 2
    o = filters.shape[0]
    pre = np.zeros((oh, ow, o), np.int64)
    for kr in range(3):
        for kc in range(3):
            tap = values[kr : kr + oh, kc : kc + ow, :].reshape(-1, c)
            pre += _exact_matmul(tap, filters[:, kr, kc, :].T).reshape(oh, ow, o)
    return pre


def oracle_conv(
    filters: np.ndarray, inp: SignedTensor, pad_value, bn: BatchNormParams
) -> SignedTensor:
    """Direct 2-D convolution with an optional constant border (-1, 0 or
    None), then batchnorm + sign as in :func:`oracle_dense`."""
    if pad_value not in (None, -1, 0):
        raise ValidationError("pad_value must be None, -1 or 0")
    pre = _conv_pre(filters, inp.values, pad_value)
    if pre.shape[2] != len(bn):
        raise ValidationError("batchnorm length must match filter count")
    return SignedTensor(_table_for(bn).decide(pre))


def oracle_maxpool(inp: SignedTensor) -> SignedTensor:
    """2x2/stride-2 max per channel."""
    h, w, c = inp.height, inp.width, inp.channels
    if h % 2 or w % 2:
        raise ValidationError("max-pooling needs even dimensions")
    v = inp.values.reshape(h // 2, 2, w // 2, 2, c)
    return SignedTensor(v.max(axis=(1, 3)))


def _layer_weights(layer: BinaryLayer):
    if layer.geometry.kind is LayerKind.CONV3X3:
        return conv_filters_signed(layer)
    return dense_weights_signed(layer)


def _require_bn(layer: BinaryLayer, label: str) -> BatchNormParams:
    if layer.bn is None:
        raise ValidationError(
            f"{label}: reference execution needs the batchnorm source parameters "
            "(only freshly generated models carry them)"
        )
    return layer.bn


def oracle_network_trace(model, image: np.ndarray):
    """Full reference forward pass, returning (per-layer outputs, scores).

    The first compute layer consumes integer pixels (zero border when
    padded), intermediate layers ternary/binary values, and the head emits
    raw integer scores.
    """
    topology, layers = model
    image = np.asarray(image)
    expect = (topology.input.dim, topology.input.dim, topology.input.channels)
    if image.shape != expect:
        raise ValidationError(f"expected image shape {expect}, got {image.shape}")
    mvu_geoms = topology.mvu_layers()
    if len(layers) != len(mvu_geoms):
        raise ValidationError(f"expected {len(mvu_geoms)} compute layers, got {len(layers)}")
    mvu = {i: l for (i, _), l in zip(mvu_geoms, layers)}
    labels = topology.labels()

    values = image.astype(np.int64)
    trace = []
    scores = None
    for i, g in enumerate(topology.layers):
        if g.kind is LayerKind.MAXPOOL2X2:
            out = oracle_maxpool(SignedTensor(values))
            values = out.values.astype(np.int64)
        elif g.kind is LayerKind.CONV3X3:
            layer = mvu[i]
            if g.pad == 0:
                pad = None
            elif layer.io_mode is IoMode.FIXEDPOINT_IN:
                pad = 0  # the 8-bit pixel domain has a real zero
            elif g.padding is Padding.ZERO_ORACLE_ONLY:
                pad = 0
            else:
                pad = -1
            pre = _conv_pre(_layer_weights(layer), values, pad)
            out = SignedTensor(_table_for(_require_bn(layer, labels[i])).decide(pre))
            values = out.values.astype(np.int64)
        else:
            layer = mvu[i]
            flat = values.reshape(-1)
            if layer.io_mode is IoMode.RAW_OUT:
                scores = oracle_raw_dense(_layer_weights(layer), flat)
                trace.append(scores)
                break
            out = oracle_dense(
                _layer_weights(layer), flat, _require_bn(layer, labels[i])
            ).reshape(1, 1, -1)
            out = SignedTensor(out)
            values = out.values.reshape(-1).astype(np.int64)
        trace.append(out)
    return trace, scores


def oracle_network(model, image: np.ndarray) -> np.ndarray:
    """Reference class scores for one image (raw integers, length = classes)."""
    _, scores = oracle_network_trace(model, image)
    return scores
