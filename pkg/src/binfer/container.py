"""Model container format (".bnn").

Layout, all integers little-endian:

  8 bytes   magic "BNNMODEL"
  u32       version (currently 1)
  u64       length of the JSON descriptor
  ...       UTF-8 JSON descriptor (sorted keys, no whitespace)
  ...       binary blob

The descriptor lists every topology layer with its geometry; compute layers
additionally carry an io_mode and byte offsets into the blob. Per compute
layer the blob holds the weight rows (row-major, each row padded to whole
64-bit words) followed by the threshold records: one 8-byte record per
neuron (i32 tau_plus, u8 direction, u8 constant-flag, i8 constant,
u8 reserved). Serialization is deterministic: identical models produce
identical bytes.
"""
from __future__ import annotations

import json
import struct
from fractions import Fraction
from pathlib import Path

import numpy as np

from ._kernels.bitops import words_needed
from .errors import FormatError, ValidationError
from .model import (
    BinaryLayer,
    Direction,
    InputSpec,
    IoMode,
    LayerGeometry,
    LayerKind,
    Padding,
    ThresholdEntry,
    ThresholdVector,
    Topology,
)
from .pipeline import Model, validate_model

MAGIC = b"BNNMODEL"
VERSION = 1
_HEADER = struct.Struct("<I")
_JSON_LEN = struct.Struct("<Q")
_THRESHOLD = struct.Struct("<iBBbB")  # tau, direction, const flag, const, reserved

_DIRECTION_CODE = {Direction.AT_LEAST: 0, Direction.AT_MOST: 1}
_CODE_DIRECTION = {v: k for k, v in _DIRECTION_CODE.items()}


def _geometry_json(g: LayerGeometry) -> dict:
    return {
        "kind": g.kind.value,
        "in_channels": g.in_channels,
        "out_channels": g.out_channels,
        "synapses": g.synapses_per_neuron,
        "ifm": g.ifm_dim,
        "ofm": g.ofm_dim,
        "padding": g.padding.value,
    }


def _geometry_from_json(d: dict) -> LayerGeometry:
    return LayerGeometry(
        LayerKind(d["kind"]),
        int(d["in_channels"]),
        int(d["out_channels"]),
        int(d["synapses"]),
        int(d["ifm"]),
        int(d["ofm"]),
        Padding(d["padding"]),
    )


def _threshold_bytes(thresholds: ThresholdVector | None) -> bytes:
    if thresholds is None:
        return b""
    out = bytearray()
    for e in thresholds:
        flag = 0 if e.constant is None else 1
        out += _THRESHOLD.pack(
            e.tau_plus, _DIRECTION_CODE[e.direction], flag, e.constant or 0, 0
        )
    return bytes(out)


def _thresholds_from_bytes(data: bytes, count: int, where: str) -> ThresholdVector:
    if len(data) != count * _THRESHOLD.size:
        raise FormatError(f"{where}: truncated threshold records")
    entries = []
    for i in range(count):
        tau, dcode, flag, const, _ = _THRESHOLD.unpack_from(data, i * _THRESHOLD.size)
        if dcode not in _CODE_DIRECTION:
            raise FormatError(f"{where}: bad direction code {dcode}")
        entries.append(
            ThresholdEntry(tau, _CODE_DIRECTION[dcode], constant=const if flag else None)
        )
    return ThresholdVector(entries)


def save_model(topology: Topology, layers, path) -> None:
    """Write the container; byte-identical for identical inputs."""
    model = validate_model(topology, layers)
    mvu_index = {i: pos for pos, (i, _) in enumerate(topology.mvu_layers())}

    blob = bytearray()
    layer_rows = []
    for i, g in enumerate(topology.layers):
        row = _geometry_json(g)
        if i in mvu_index:
            layer = model.layers[mvu_index[i]]
            wbytes = layer.weight_words.astype("<u8").tobytes()
            tbytes = _threshold_bytes(layer.thresholds)
            row.update(
                io_mode=layer.io_mode.value,
                weights_offset=len(blob),
                weights_len=len(wbytes),
                thresholds_offset=len(blob) + len(wbytes),
                thresholds_len=len(tbytes),
            )
            blob += wbytes
            blob += tbytes
        layer_rows.append(row)

    descriptor = {
        "classes": topology.classes,
        "input": {
            "bits": topology.input.bits,
            "channels": topology.input.channels,
            "dim": topology.input.dim,
        },
        "layers": layer_rows,
        "name": topology.name,
        "padding": topology.padding.value,
        "sigma": str(topology.sigma),
        "version": VERSION,
    }
    js = json.dumps(descriptor, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(_HEADER.pack(VERSION))
        f.write(_JSON_LEN.pack(len(js)))
        f.write(js)
        f.write(bytes(blob))


def load_model(path) -> Model:
    """Read and fully re-validate a container; errors name the layer index."""
    data = Path(path).read_bytes()
    if len(data) < len(MAGIC) + _HEADER.size + _JSON_LEN.size:
        raise FormatError("file too short for a model container")
    if data[: len(MAGIC)] != MAGIC:
        raise FormatError("bad magic: not a model container")
    off = len(MAGIC)
    (version,) = _HEADER.unpack_from(data, off)
    if version != VERSION:
        raise FormatError(f"unsupported container version {version}")
    off += _HEADER.size
    (jlen,) = _JSON_LEN.unpack_from(data, off)
    off += _JSON_LEN.size
    if off + jlen > len(data):
        raise FormatError("truncated descriptor")
    try:
        descriptor = json.loads(data[off : off + jlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"bad descriptor: {exc}") from exc
    blob = data[off + jlen :]

    try:
        geoms = []
        for i, row in enumerate(descriptor["layers"]):
            try:
                geoms.append(_geometry_from_json(row))
            except (ValidationError, ValueError, KeyError) as exc:
                raise FormatError(f"layer {i}: {exc}") from exc
        topology = Topology(
            name=descriptor["name"],
            sigma=Fraction(descriptor["sigma"]),
            padding=Padding(descriptor["padding"]),
            layers=tuple(geoms),
            input=InputSpec(**descriptor["input"]),
            classes=int(descriptor["classes"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad descriptor: {exc}") from exc

    layers = []
    for i, (g, row) in enumerate(zip(topology.layers, descriptor["layers"])):
        if g.kind is LayerKind.MAXPOOL2X2:
            continue
        try:
            io_mode = IoMode(row["io_mode"])
            woff, wlen = int(row["weights_offset"]), int(row["weights_len"])
            toff, tlen = int(row["thresholds_offset"]), int(row["thresholds_len"])
        except (KeyError, ValueError) as exc:
            raise FormatError(f"layer {i}: missing blob location: {exc}") from exc
        expect_wlen = g.neurons * words_needed(g.synapses_per_neuron) * 8
        if wlen != expect_wlen:
            raise FormatError(f"layer {i}: expected {expect_wlen} weight bytes, got {wlen}")
        if min(woff, wlen, toff, tlen) < 0:
            raise FormatError(f"layer {i}: negative blob location")
        if woff + wlen > len(blob) or toff + tlen > len(blob):
            raise FormatError(f"layer {i}: blob truncated")
        words = np.frombuffer(blob, dtype="<u8", count=wlen // 8, offset=woff)
        words = words.reshape(g.neurons, -1).copy()
        thresholds = None
        if io_mode is not IoMode.RAW_OUT:
            thresholds = _thresholds_from_bytes(
                blob[toff : toff + tlen], g.neurons, f"layer {i}"
            )
        elif tlen:
            raise FormatError(f"layer {i}: raw-output layer carries thresholds")
        try:
            layers.append(BinaryLayer(g, words, thresholds, io_mode))
        except ValidationError as exc:
            raise ValidationError(f"layer {i}: {exc}") from exc

    return validate_model(topology, layers)
