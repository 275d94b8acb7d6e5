"""Streaming network executor, synaptic-operation accounting and the
equivalence harness against the signed reference path.

Execution is emulated layer-at-a-time per frame (functional semantics; the
cycle-level view lives in the scheduler/resources modules). Models are
immutable, so frames may be processed concurrently; results never depend on
the worker count.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ._kernels import kernels
from .errors import ValidationError
from .model import (
    PIXEL_MAX,
    BinaryLayer,
    BitTensor,
    IoMode,
    LayerKind,
    Padding,
    ThresholdEntry,
    ThresholdVector,
    Topology,
    build_topology,
    generate_random_model,
)
from .oracle import oracle_network_trace
from .pool import or_pool
from .swu import build_window_plan, generate_image_matrix, stream_pad_write

FRAME_BYTES = 32 * 32 * 3  # raw 8-bit RGB frame, channel-interleaved per pixel


class Model(NamedTuple):
    """A runnable network: topology plus one BinaryLayer per compute layer."""

    topology: Topology
    layers: tuple[BinaryLayer, ...]


def validate_model(topology: Topology, layers) -> Model:
    """Check layer list consistency against the topology and io-mode layout
    (8-bit first layer, binary middles, raw head)."""
    layers = tuple(layers)
    mvu = topology.mvu_layers()
    if len(layers) != len(mvu):
        raise ValidationError(f"expected {len(mvu)} compute layers, got {len(layers)}")
    if not layers:
        raise ValidationError("model has no compute layers")
    for pos, ((idx, g), layer) in enumerate(zip(mvu, layers)):
        if layer.geometry != g:
            raise ValidationError(f"layer {idx}: geometry differs from the topology")
        expect = IoMode.BINARY
        if pos == 0:
            expect = IoMode.FIXEDPOINT_IN
        elif pos == len(layers) - 1:
            expect = IoMode.RAW_OUT
        if layer.io_mode is not expect:
            raise ValidationError(
                f"layer {idx}: expected io_mode {expect.value}, got {layer.io_mode.value}"
            )
    return Model(topology, layers)


@dataclass(frozen=True)
class ClassificationResult:
    scores: tuple[int, ...]
    label: int

    def to_json(self, frame: int | None = None) -> dict:
        d = {"label": self.label, "scores": list(self.scores)}
        if frame is not None:
            d = {"frame": frame, **d}
        return d


@dataclass(frozen=True)
class OpCountReport:
    """Synaptic operations per frame: 2 ops per MAC (XNOR + popcount
    accumulate, and add/subtract on the 8-bit first layer); pooling
    contributes none."""

    network: str
    per_layer: tuple[tuple[str, int, int], ...]  # (label, macs, ops)
    total_macs: int
    total_ops: int

    def to_json(self) -> dict:
        return {
            "network": self.network,
            "layers": [
                {"layer": lbl, "macs": m, "ops": o} for lbl, m, o in self.per_layer
            ],
            "total_macs": self.total_macs,
            "total_ops": self.total_ops,
        }

    def render_text(self) -> str:
        lines = [f"{self.network}: operations per frame"]
        for lbl, m, o in self.per_layer:
            lines.append(f"  {lbl:<8} macs {m:>13,}   ops {o:>13,}")
        lines.append(f"  total    macs {self.total_macs:>13,}   ops {self.total_ops:>13,}")
        lines.append(f"  {self.total_ops / 1e6:.1f} Mops")
        return "\n".join(lines)


def count_ops(topology: Topology) -> OpCountReport:
    """conv MACs = ofm^2 * out_channels * 9 * in_channels, FC MACs = X*Y,
    ops = 2*MACs, pooling 0."""
    rows = []
    total = 0
    for label, g in zip(topology.labels(), topology.layers):
        if g.kind is LayerKind.MAXPOOL2X2:
            macs = 0
        elif g.kind is LayerKind.CONV3X3:
            macs = g.ofm_dim * g.ofm_dim * g.out_channels * 9 * g.in_channels
        else:
            macs = g.neurons * g.synapses_per_neuron
        rows.append((label, macs, 2 * macs))
        total += macs
    return OpCountReport(topology.name, tuple(rows), total, 2 * total)


def _check_image(topology: Topology, image: np.ndarray) -> np.ndarray:
    image = np.asarray(image)
    shape = (topology.input.dim, topology.input.dim, topology.input.channels)
    if image.shape == (shape[0] * shape[1] * shape[2],):
        image = image.reshape(shape)
    if image.shape != shape:
        raise ValidationError(f"expected image shape {shape}, got {image.shape}")
    if image.min() < 0 or image.max() > PIXEL_MAX:
        raise ValidationError("pixels must be 8-bit unsigned values")
    return image.astype(np.int64)


def _pixel_windows(image: np.ndarray, geometry) -> np.ndarray:
    """(n_windows, 9*C) pixel matrix for the 8-bit first layer; the border,
    when padded, is zero-valued pixels (the pixel domain has a real zero)."""
    plan = build_window_plan(geometry)
    if geometry.pad:
        image = np.pad(image, ((1, 1), (1, 1), (0, 0)))
    pixels = image.reshape(-1, geometry.in_channels)
    return pixels[plan.read_addresses.reshape(-1)].reshape(
        plan.n_windows, plan.window_bits
    )


def run_network_trace(model: Model, image: np.ndarray):
    """Forward pass returning (per-layer outputs, scores); the traced
    outputs let the verification harness name the first diverging layer."""
    topology, layers = validate_model(*model)
    image = _check_image(topology, image)
    mvu = {i: l for (i, _), l in zip(topology.mvu_layers(), layers)}

    trace = []
    scores = None
    x: BitTensor | None = None
    for i, g in enumerate(topology.layers):
        if g.kind is LayerKind.MAXPOOL2X2:
            x = or_pool(x)
        elif g.kind is LayerKind.CONV3X3:
            layer = mvu[i]
            thr = layer.thresholds
            if layer.io_mode is IoMode.FIXEDPOINT_IN:
                windows = _pixel_windows(image, g)
                words = kernels.mvtu_fx_stream(
                    layer.weight_words, windows, g.synapses_per_neuron, thr.tau, thr.mode
                )
            else:
                plan = build_window_plan(g)
                buf = stream_pad_write(x, g)
                windows = generate_image_matrix(buf, plan)
                words = kernels.mvtu_bin_stream(
                    layer.weight_words, windows, g.synapses_per_neuron, thr.tau, thr.mode
                )
            x = BitTensor(g.ofm_dim, g.ofm_dim, g.out_channels, words)
        else:
            layer = mvu[i]
            vec = x.as_vector()
            if vec.bit_len != g.synapses_per_neuron:
                raise ValidationError(f"layer {i}: input length mismatch")
            if layer.io_mode is IoMode.RAW_OUT:
                scores = kernels.mvtu_raw(layer.weight_words, vec.words, g.synapses_per_neuron)
                trace.append(scores)
                break
            thr = layer.thresholds
            words = kernels.mvtu_bin_stream(
                layer.weight_words, vec.words.reshape(1, -1), g.synapses_per_neuron, thr.tau, thr.mode
            )
            x = BitTensor(1, 1, g.neurons, words)
        trace.append(x)
    return trace, scores


def run_network(model: Model, image: np.ndarray) -> ClassificationResult:
    """Classify one frame: 8-bit first layer, lowered binary convolutions,
    OR pools, binary fully-connected layers, raw-score head. Ties in the
    argmax break toward the lowest class index."""
    _, scores = run_network_trace(model, image)
    return ClassificationResult(tuple(int(s) for s in scores), int(np.argmax(scores)))


def run_batch(model: Model, images, workers: int = 1) -> list[ClassificationResult]:
    """Classify frames concurrently; order-preserving, and the results are
    a pure function of the inputs regardless of worker count."""
    if workers < 1:
        raise ValidationError("workers must be >= 1")
    images = list(images)
    if not images:
        return []
    if workers == 1 or len(images) == 1:
        return [run_network(model, im) for im in images]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda im: run_network(model, im), images))


def load_frames(data: bytes) -> list[np.ndarray]:
    """Split a raw image file (concatenated 3072-byte RGB frames) into
    (32, 32, 3) uint8 arrays."""
    if len(data) == 0 or len(data) % FRAME_BYTES:
        raise ValidationError(
            f"image file must be a multiple of {FRAME_BYTES} bytes, got {len(data)}"
        )
    arr = np.frombuffer(data, np.uint8).reshape(-1, 32, 32, 3)
    return [arr[i] for i in range(arr.shape[0])]


@dataclass(frozen=True)
class VerifyReport:
    """Outcome of the reference-equivalence harness."""

    trials: int
    frames: int
    bit_exact: bool
    first_mismatch: str | None

    def render_text(self) -> str:
        if self.bit_exact:
            return f"all {self.frames} cases bit-exact ({self.trials} random models)"
        return f"MISMATCH at {self.first_mismatch}"


def _sabotage(model: Model) -> Model:
    """Deliberately corrupt the second compute layer's thresholds (used to
    prove the harness actually detects divergence)."""
    layers = list(model.layers)
    victim = layers[1]
    broken = ThresholdVector(
        [ThresholdEntry(0, e.direction, constant=1) for e in victim.thresholds]
    )
    layers[1] = BinaryLayer(
        victim.geometry, victim.weight_words, broken, victim.io_mode, bn=victim.bn
    )
    return Model(model.topology, tuple(layers))


def verify_equivalence(
    sigma,
    trials: int,
    seed: int = 0,
    images_per_trial: int = 1,
    inject_fault: bool = False,
) -> VerifyReport:
    """Run random models and images through both paths and compare every
    layer output bit for bit (padding alternates between -1 and none)."""
    if trials < 1:
        raise ValidationError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    frames = 0
    for t in range(trials):
        padding = Padding.NEG_ONE if t % 2 == 0 else Padding.NONE
        topology = build_topology(sigma, padding)
        model = validate_model(topology, generate_random_model(topology, seed + t))
        run = _sabotage(model) if inject_fault else model
        labels = topology.labels()
        for _ in range(images_per_trial):
            image = rng.integers(0, 256, size=(32, 32, 3), dtype=np.uint8)
            etrace, escores = run_network_trace(run, image)
            otrace, oscores = oracle_network_trace(model, image)
            frames += 1
            for li, (e, o) in enumerate(zip(etrace, otrace)):
                if isinstance(e, BitTensor):
                    same = np.array_equal(e.to_signed(), o.values)
                else:
                    same = np.array_equal(e, o)
                if not same:
                    where = f"trial {t}, layer {labels[li]} (index {li})"
                    return VerifyReport(trials, frames, False, where)
            if not np.array_equal(escores, oscores):
                return VerifyReport(trials, frames, False, f"trial {t}, class scores")
    return VerifyReport(trials, frames, True, None)
