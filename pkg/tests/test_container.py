"""Model container format: round-trips, determinism, corruption handling."""
import json
import struct

import pytest

from binfer import (
    FormatError,
    Padding,
    ValidationError,
    build_topology,
    generate_random_model,
    load_model,
    save_model,
)


@pytest.fixture
def model_path(tmp_path):
    return tmp_path / "model.bnn"


def _make(seed=0, padding=Padding.NEG_ONE):
    topo = build_topology("1/4", padding)
    return topo, generate_random_model(topo, seed)


class TestRoundTrip:
    @pytest.mark.parametrize("padding", [Padding.NEG_ONE, Padding.NONE])
    def test_structural_identity(self, model_path, padding):
        topo, layers = _make(3, padding)
        save_model(topo, layers, model_path)
        loaded = load_model(model_path)
        assert loaded.topology == topo
        assert tuple(loaded.layers) == tuple(layers)

    def test_byte_identical_resaves(self, model_path, tmp_path):
        topo, layers = _make(5)
        save_model(topo, layers, model_path)
        other = tmp_path / "again.bnn"
        save_model(topo, layers, other)
        assert model_path.read_bytes() == other.read_bytes()

    def test_resave_of_loaded_model(self, model_path, tmp_path):
        topo, layers = _make(7)
        save_model(topo, layers, model_path)
        loaded = load_model(model_path)
        other = tmp_path / "resaved.bnn"
        save_model(loaded.topology, loaded.layers, other)
        assert model_path.read_bytes() == other.read_bytes()


class TestSaveValidation:
    def test_empty_layer_list(self, model_path):
        topo, _ = _make()
        with pytest.raises(ValidationError):
            save_model(topo, [], model_path)

    def test_wrong_layer_count(self, model_path):
        topo, layers = _make()
        with pytest.raises(ValidationError):
            save_model(topo, layers[:-1], model_path)


def _locate_layer(data, index):
    """(descriptor, blob offset within file) for byte patching."""
    jlen = struct.unpack_from("<Q", data, 12)[0]
    descriptor = json.loads(data[20 : 20 + jlen].decode())
    return descriptor, 20 + jlen


class TestCorruption:
    def test_bad_magic(self, model_path):
        topo, layers = _make()
        save_model(topo, layers, model_path)
        data = bytearray(model_path.read_bytes())
        data[:8] = b"NOTMODEL"
        model_path.write_bytes(bytes(data))
        with pytest.raises(FormatError, match="magic"):
            load_model(model_path)

    def test_bad_version(self, model_path):
        topo, layers = _make()
        save_model(topo, layers, model_path)
        data = bytearray(model_path.read_bytes())
        struct.pack_into("<I", data, 8, 99)
        model_path.write_bytes(bytes(data))
        with pytest.raises(FormatError, match="version"):
            load_model(model_path)

    def test_truncated_blob(self, model_path):
        topo, layers = _make()
        save_model(topo, layers, model_path)
        data = model_path.read_bytes()
        model_path.write_bytes(data[: len(data) - 40])
        with pytest.raises(FormatError, match="layer"):
            load_model(model_path)

    def test_out_of_range_threshold_names_layer(self, model_path):
        # patch the first threshold of the first binary conv to tau = Y + 2
        topo, layers = _make()
        save_model(topo, layers, model_path)
        data = bytearray(model_path.read_bytes())
        descriptor, blob0 = _locate_layer(data, 1)
        row = descriptor["layers"][1]
        assert row["io_mode"] == "binary_in_binary_out"
        rec = blob0 + row["thresholds_offset"]
        struct.pack_into("<iBBbB", data, rec, row["synapses"] + 2, 0, 0, 0, 0)
        model_path.write_bytes(bytes(data))
        with pytest.raises(ValidationError, match="layer 1"):
            load_model(model_path)

    def test_garbage_json(self, model_path):
        topo, layers = _make()
        save_model(topo, layers, model_path)
        data = bytearray(model_path.read_bytes())
        data[22] = 0xFF
        model_path.write_bytes(bytes(data))
        with pytest.raises(FormatError):
            load_model(model_path)

    def test_short_file(self, model_path):
        model_path.write_bytes(b"BNN")
        with pytest.raises(FormatError):
            load_model(model_path)
