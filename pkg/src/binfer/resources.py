"""Analytical resource models: BRAM allocation and utilization, pipeline
latency, and roofline peaks.

BRAM36 primitives are modeled at a single fixed 36-bit x 1024 aspect:
a memory of width w and depth d costs ceil(w/36)*ceil(d/1024) primitives.
Real devices offer more aspect ratios, but the fixed aspect preserves the
mechanism under study (folding shatters the weight matrix into many
narrow, shallow memories, so most allocated storage is dead).
"""
from __future__ import annotations

import importlib.resources
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path

from .errors import ValidationError
from .model import PIXEL_MAX, IoMode, LayerKind, Topology, layer_io_modes
from .reportfmt import format_table
from .scheduler import FoldingConfig

BRAM_WIDTH = 36
BRAM_DEPTH = 1024
BRAM_BITS = BRAM_WIDTH * BRAM_DEPTH  # 36864

DEVICE_DIR_ENV = "BINFER_DEVICE_DIR"


@dataclass(frozen=True)
class DeviceModel:
    """Compute-fabric description plus per-datatype op costs.

    The cost table is deliberately a calibration surface: peaks follow
    floor(avail * utilization_factor / cost) * clock_hz per resource type,
    and the shipped files can be edited to match vendor figures.
    """

    name: str
    luts: int
    brams_36k: int
    dsps: int
    utilization_factor: float
    clock_hz: int
    costs: dict

    def __post_init__(self):
        if not 0 < self.utilization_factor <= 1:
            raise ValidationError("utilization_factor must be in (0, 1]")
        for dtype, cost in self.costs.items():
            if not cost or any(v <= 0 for v in cost.values()):
                raise ValidationError(f"costs for {dtype} must be positive")

    def peak_ops(self, datatype: str) -> float:
        """min over resource types of floor(avail*util/cost) * clock."""
        try:
            cost = self.costs[datatype]
        except KeyError:
            raise ValidationError(f"device {self.name} has no cost entry for {datatype!r}")
        limits = []
        if "lut" in cost:
            limits.append(math.floor(self.luts * self.utilization_factor / cost["lut"]))
        if "dsp" in cost:
            limits.append(math.floor(self.dsps * self.utilization_factor / cost["dsp"]))
        return min(limits) * self.clock_hz

    @classmethod
    def from_json(cls, d: dict) -> "DeviceModel":
        return cls(
            name=d["name"],
            luts=int(d["luts"]),
            brams_36k=int(d["brams_36k"]),
            dsps=int(d["dsps"]),
            utilization_factor=float(d["utilization_factor"]),
            clock_hz=int(d["clock_hz"]),
            costs={k: dict(v) for k, v in d["costs"].items()},
        )


def load_device(spec: str | Path) -> DeviceModel:
    """Load a device file; bare names resolve against the current directory,
    $BINFER_DEVICE_DIR, then the packaged device files."""
    candidates = [Path(spec)]
    name = str(spec)
    if not name.endswith(".json"):
        candidates.append(Path(name + ".json"))
    env = os.environ.get(DEVICE_DIR_ENV)
    if env:
        candidates += [Path(env) / c.name for c in list(candidates)]
    for c in candidates:
        if c.is_file():
            return DeviceModel.from_json(json.loads(c.read_text()))
    pkg = importlib.resources.files("binfer") / "devices"
    for c in (name, name + ".json"):
        res = pkg / Path(c).name
        if res.is_file():
            return DeviceModel.from_json(json.loads(res.read_text()))
    raise ValidationError(f"device file not found: {spec}")


def _brams_for(width: int, depth: int) -> int:
    if width <= 0 or depth <= 0:
        return 0
    return math.ceil(width / BRAM_WIDTH) * math.ceil(depth / BRAM_DEPTH)


def _threshold_width(io_mode: IoMode, y: int) -> int:
    """Accumulator/threshold width: 1 + ceil(log2(Y)) on the popcount path,
    widened to cover +/-255*Y on the 8-bit input layer."""
    if io_mode is IoMode.RAW_OUT:
        return 0
    span = PIXEL_MAX * y if io_mode is IoMode.FIXEDPOINT_IN else y
    return 1 + (span - 1).bit_length()


@dataclass(frozen=True)
class LayerBram:
    label: str
    weight_bits: int
    threshold_bits: int
    buffer_bits: int
    weight_brams: int
    threshold_brams: int
    buffer_brams: int

    @property
    def used_bits(self) -> int:
        return self.weight_bits + self.threshold_bits + self.buffer_bits

    @property
    def brams(self) -> int:
        return self.weight_brams + self.threshold_brams + self.buffer_brams

    @property
    def bits_allocated(self) -> int:
        return self.brams * BRAM_BITS

    @property
    def utilization(self) -> float:
        return self.used_bits / self.bits_allocated if self.brams else 0.0

    def to_json(self) -> dict:
        return {
            "layer": self.label,
            "weight_bits": self.weight_bits,
            "threshold_bits": self.threshold_bits,
            "buffer_bits": self.buffer_bits,
            "brams": self.brams,
            "bits_allocated": self.bits_allocated,
            "utilization": self.utilization,
        }


@dataclass(frozen=True)
class BramReport:
    network: str
    layers: tuple[LayerBram, ...]
    device_brams: int | None

    @property
    def total_brams(self) -> int:
        return sum(l.brams for l in self.layers)

    @property
    def total_used_bits(self) -> int:
        return sum(l.used_bits for l in self.layers)

    @property
    def utilization(self) -> float:
        """Weighted-average utilization: stored bits over allocated bits."""
        return self.total_used_bits / (self.total_brams * BRAM_BITS)

    @property
    def fits_device(self) -> bool | None:
        if self.device_brams is None:
            return None
        return self.total_brams <= self.device_brams

    def to_json(self) -> dict:
        return {
            "network": self.network,
            "layers": [l.to_json() for l in self.layers],
            "total_brams": self.total_brams,
            "total_used_bits": self.total_used_bits,
            "utilization": self.utilization,
            "device_brams": self.device_brams,
            "fits_device": self.fits_device,
        }

    def render_text(self) -> str:
        rows = [
            (
                l.label,
                l.weight_bits,
                l.threshold_bits,
                l.buffer_bits,
                l.brams,
                f"{100 * l.utilization:.2f}%",
            )
            for l in self.layers
        ]
        table = format_table(
            ("layer", "weight bits", "thresh bits", "buffer bits", "BRAM36", "util"), rows
        )
        fit = ""
        if self.device_brams is not None:
            verdict = "fits" if self.fits_device else "DOES NOT FIT"
            fit = f" ({verdict} in {self.device_brams} BRAMs)"
        return (
            f"{self.network} BRAM allocation\n{table}\n"
            f"total {self.total_brams} BRAM36, weighted utilization "
            f"{100 * self.utilization:.2f}%{fit}"
        )


def bram_estimate(
    topology: Topology, config: FoldingConfig, device: DeviceModel | None = None
) -> BramReport:
    """Model the on-chip memories of a folded network.

    Per compute layer, each of the P PEs holds a weight memory of width S and
    depth Fn*Fs and a threshold memory of width T and depth Fn; M > 1 lanes
    share the single copy (only the datapath would be duplicated). Conv
    layers add the pixel-addressed window buffer (width = channel bits,
    depth = padded_dim^2); pools add their two row buffers.
    """
    labels = topology.labels()
    modes = dict(zip([i for i, _ in topology.mvu_layers()], layer_io_modes(topology)))
    out = []
    for i, g in enumerate(topology.layers):
        if g.kind is LayerKind.MAXPOOL2X2:
            w = g.in_channels
            out.append(
                LayerBram(labels[i], 0, 0, 2 * g.ifm_dim * g.in_channels,
                          0, 0, _brams_for(w, 2 * g.ifm_dim))
            )
            continue
        e = config.by_index(i)
        io_mode = modes[i]
        x, y = g.neurons, g.synapses_per_neuron
        t_width = _threshold_width(io_mode, y)
        weight_brams = e.p * _brams_for(e.s, e.fn * e.fs)
        threshold_brams = e.p * _brams_for(t_width, e.fn) if t_width else 0
        buffer_bits = buffer_brams = 0
        if g.kind is LayerKind.CONV3X3:
            pixel_bits = g.in_channels * (8 if io_mode is IoMode.FIXEDPOINT_IN else 1)
            depth = g.padded_dim * g.padded_dim
            buffer_bits = depth * pixel_bits
            buffer_brams = _brams_for(pixel_bits, depth)
        out.append(
            LayerBram(
                labels[i],
                weight_bits=x * y,
                threshold_bits=x * t_width,
                buffer_bits=buffer_bits,
                weight_brams=weight_brams,
                threshold_brams=threshold_brams,
                buffer_brams=buffer_brams,
            )
        )
    return BramReport(topology.name, tuple(out), device.brams_36k if device else None)


def latency_estimate(topology: Topology, config: FoldingConfig, device: DeviceModel) -> float:
    """Balanced-pipeline fill estimate in seconds: each engine starts as soon
    as its predecessor produces output, so one frame's latency is modeled as
    the sum of the per-layer initiation intervals over the clock. Host
    transfer and window-buffer skew are not modeled."""
    total_cycles = sum(e.ii for e in config.entries)
    return total_cycles / device.clock_hz


@dataclass(frozen=True)
class RooflineNetwork:
    name: str
    total_ops: int
    model_bytes: int
    frame_bytes: int
    attained_gops: float | None = None

    @property
    def arithmetic_intensity(self) -> float:
        """Ops per byte of off-chip traffic; parameters stay on-chip, so the
        traffic is the frame itself."""
        return self.total_ops / self.frame_bytes


@dataclass(frozen=True)
class RooflineReport:
    device: DeviceModel
    peaks: dict
    networks: tuple[RooflineNetwork, ...]

    def peak_ratio(self, a: str = "binary", b: str = "float32") -> float:
        return self.peaks[a] / self.peaks[b]

    def to_json(self) -> dict:
        return {
            "device": self.device.name,
            "clock_hz": self.device.clock_hz,
            "utilization_factor": self.device.utilization_factor,
            "peaks_ops_per_s": dict(self.peaks),
            "networks": [
                {
                    "name": n.name,
                    "total_ops": n.total_ops,
                    "model_bytes": n.model_bytes,
                    "frame_bytes": n.frame_bytes,
                    "arithmetic_intensity": n.arithmetic_intensity,
                    "attained_gops": n.attained_gops,
                }
                for n in self.networks
            ],
        }

    def render_text(self) -> str:
        rows = [(k, f"{v / 1e12:.3f} TOps/s") for k, v in sorted(self.peaks.items())]
        out = [f"{self.device.name} roofline peaks", format_table(("datatype", "peak"), rows)]
        if "binary" in self.peaks and "float32" in self.peaks:
            out.append(f"binary:float32 peak ratio {self.peak_ratio():.1f}x")
        if self.networks:
            nrows = [
                (
                    n.name,
                    f"{n.total_ops / 1e6:.1f}M",
                    f"{n.arithmetic_intensity:.0f}",
                    "-" if n.attained_gops is None else f"{n.attained_gops:.0f}",
                )
                for n in self.networks
            ]
            out.append(format_table(("network", "ops/frame", "ops/byte", "attained GOps/s"), nrows))
        return "\n".join(out)


def roofline(device: DeviceModel, networks=()) -> RooflineReport:
    """Per-datatype peaks for a device plus arithmetic-intensity markers for
    the given networks (name, total_ops, model_bytes, frame_bytes[,
    attained_gops])."""
    peaks = {dtype: device.peak_ops(dtype) for dtype in device.costs}
    rows = tuple(RooflineNetwork(*n) if not isinstance(n, RooflineNetwork) else n for n in networks)
    return RooflineReport(device, peaks, rows)


@dataclass(frozen=True)
class KfpsRow:
    network: str
    kfps: float
    gops: float


def kfps_table(reports) -> list[KfpsRow]:
    """Summary rows (network, kFPS, GOps/s) from schedule reports."""
    return [
        KfpsRow(r.network, r.delivered_fps / 1e3, r.gops) for r in reports
    ]


def render_kfps_text(rows) -> str:
    return format_table(
        ("network", "kFPS", "GOps/s"),
        [(r.network, f"{r.kfps:.1f}", f"{r.gops:,.0f}") for r in rows],
    )
