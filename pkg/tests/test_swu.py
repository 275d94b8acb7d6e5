"""Window plans, streaming padding, image-matrix generation, interleaving."""
import numpy as np
import pytest

from binfer import (
    BitTensor,
    LayerGeometry,
    LayerKind,
    Padding,
    UnsupportedPaddingError,
    ValidationError,
    build_window_plan,
    generate_image_matrix,
    interleave_filters,
    stream_pad_write,
)
from binfer._kernels.bitops import unpack_bits, words_needed
from binfer.model import BatchNormParams
from binfer.mvtu import compile_thresholds
from binfer.oracle import SignedTensor, oracle_conv
from binfer.swu import deinterleave_filters


def conv_geo(ifm, c_in, c_out=1, padding=Padding.NEG_ONE):
    ofm = ifm - 2 if padding is Padding.NONE else ifm
    return LayerGeometry(LayerKind.CONV3X3, c_in, c_out, 9 * c_in, ifm, ofm, padding)


class TestWindowPlan:
    def test_single_unpadded_window(self):
        plan = build_window_plan(conv_geo(3, 1, padding=Padding.NONE))
        assert plan.n_windows == 1
        assert plan.read_addresses.tolist() == [list(range(9))]

    def test_small_padded_plan(self):
        # ifm 2 with one pixel of padding: a 4x4 buffer whose 3x3 windows
        # tile an ofm of padded_dim - k + 1 = 2
        plan = build_window_plan(conv_geo(2, 1))
        assert plan.padded_dim == 4
        assert plan.ofm_dim == 2
        assert plan.n_windows == 4
        assert plan.read_addresses.shape == (4, 9)
        assert plan.read_addresses[0].tolist() == [0, 1, 2, 4, 5, 6, 8, 9, 10]
        assert (plan.read_addresses < 16).all()

    def test_full_scale_plan(self):
        plan = build_window_plan(conv_geo(32, 128))
        assert plan.ofm_dim == 32
        assert plan.read_addresses.shape == (1024, 9)

    def test_non_conv_rejected(self):
        g = LayerGeometry(LayerKind.FULLY_CONNECTED, 8, 4, 8, 1, 1, Padding.NONE)
        with pytest.raises(ValidationError):
            build_window_plan(g)


class TestStreamPadWrite:
    def test_single_pixel(self):
        t = BitTensor.from_bits(1, 1, 1, np.array([1], np.uint8))
        out = stream_pad_write(t, conv_geo(1, 1))
        grid = out.to_bits().reshape(3, 3)
        assert grid[1, 1] == 1
        assert grid.sum() == 1  # every border address holds the -1 pattern

    def test_no_padding_is_identity(self, rng):
        t = BitTensor.from_signed(rng.choice([-1, 1], size=(4, 4, 2)))
        assert stream_pad_write(t, conv_geo(4, 2, padding=Padding.NONE)) is t

    def test_interleaved_interior_preserved(self, rng):
        vals = rng.choice([-1, 1], size=(2, 2, 2)).astype(np.int8)
        out = stream_pad_write(BitTensor.from_signed(vals), conv_geo(2, 2))
        got = out.to_signed()
        assert np.array_equal(got[1:-1, 1:-1], vals)
        border = got.copy()
        border[1:-1, 1:-1] = -1
        assert (border == -1).all()  # 12 border pixels, every channel bit unset

    def test_zero_padding_refused(self, rng):
        t = BitTensor.from_signed(rng.choice([-1, 1], size=(2, 2, 1)))
        g = conv_geo(2, 1, padding=Padding.ZERO_ORACLE_ONLY)
        with pytest.raises(UnsupportedPaddingError, match="oracle"):
            stream_pad_write(t, g)

    def test_stream_shape_checked(self, rng):
        t = BitTensor.from_signed(rng.choice([-1, 1], size=(3, 3, 1)))
        with pytest.raises(ValidationError):
            stream_pad_write(t, conv_geo(4, 1))


class TestImageMatrix:
    def test_single_window_is_flat_buffer(self, rng):
        g = conv_geo(3, 1, padding=Padding.NONE)
        t = BitTensor.from_signed(rng.choice([-1, 1], size=(3, 3, 1)))
        rows = generate_image_matrix(t, build_window_plan(g))
        assert rows.shape == (1, 1)
        assert np.array_equal(unpack_bits(rows, 9)[0], t.to_bits())

    def test_border_occurrence_counts(self):
        # corner pixel of a 3x3 image: 1 window unpadded, 4 windows padded
        for padding, expected in ((Padding.NONE, 1), (Padding.NEG_ONE, 4)):
            g = conv_geo(3, 1, padding=padding)
            plan = build_window_plan(g)
            corner = 0 if padding is Padding.NONE else plan.padded_dim + 1
            hits = int((plan.read_addresses == corner).sum())
            assert hits == expected

    def test_datapath_is_one_bit_per_synapse(self, rng):
        g = conv_geo(4, 3)
        t = BitTensor.from_signed(rng.choice([-1, 1], size=(4, 4, 3)))
        rows = generate_image_matrix(stream_pad_write(t, g), build_window_plan(g))
        # exactly ceil(Y/64) words per window, no validity side-band
        assert rows.dtype == np.uint64
        assert rows.shape == (16, words_needed(27))


def _lowered_conv(vals, filters, bn, padding):
    """SWU + MVU path for one conv layer, returning the signed output map."""
    from binfer._kernels import kernels

    c_in = vals.shape[2]
    x = filters.shape[0]
    g = conv_geo(vals.shape[0], c_in, x, padding)
    plan = build_window_plan(g)
    buf = stream_pad_write(BitTensor.from_signed(vals), g)
    windows = generate_image_matrix(buf, plan)
    thr = compile_thresholds(bn, g.synapses_per_neuron)
    words = kernels.mvtu_bin_stream(
        interleave_filters(filters), windows, g.synapses_per_neuron, thr.tau, thr.mode
    )
    return BitTensor(g.ofm_dim, g.ofm_dim, x, words).to_signed()


def _random_bn(rng, n, span):
    mk = lambda lo, hi: tuple(int(rng.integers(lo, hi + 1)) for _ in range(n))
    return BatchNormParams(
        mk(-3, 3), mk(-4, 4), mk(-span, span), tuple(int(rng.integers(1, 4)) for _ in range(n)), mk(-2, 2)
    )


class TestLoweringEquivalence:
    @pytest.mark.parametrize("c", [1, 2, 8])
    @pytest.mark.parametrize("ifm", [4, 6, 8])
    @pytest.mark.parametrize("padding", [Padding.NONE, Padding.NEG_ONE])
    def test_lowered_equals_direct(self, rng, c, ifm, padding):
        for _ in range(4):
            x = int(rng.integers(1, 6))
            vals = rng.choice([-1, 1], size=(ifm, ifm, c)).astype(np.int8)
            filters = rng.choice([-1, 1], size=(x, 3, 3, c)).astype(np.int8)
            bn = _random_bn(rng, x, 2 * int(np.sqrt(9 * c)) + 1)
            pad_value = -1 if padding is Padding.NEG_ONE else None
            direct = oracle_conv(filters, SignedTensor(vals), pad_value, bn)
            lowered = _lowered_conv(vals, filters, bn, padding)
            assert np.array_equal(lowered, direct.values)


class TestInterleaveFilters:
    def test_single_channel_raster_order(self):
        filt = np.arange(9).reshape(1, 3, 3, 1) % 2 * 2 - 1
        rows = interleave_filters(filt)
        assert np.array_equal(unpack_bits(rows, 9)[0], (filt.reshape(-1) > 0))

    def test_two_channel_alternation(self):
        # ch0 all +1, ch1 all -1: bits must alternate 1,0 per tap
        filt = np.stack([np.ones((3, 3)), -np.ones((3, 3))], axis=-1)[None]
        bits = unpack_bits(interleave_filters(filt), 18)[0]
        assert bits.tolist() == [1, 0] * 9

    def test_round_trip(self, rng):
        filt = rng.choice([-1, 1], size=(5, 3, 3, 7))
        assert np.array_equal(deinterleave_filters(interleave_filters(filt), 7), filt)

    def test_zero_weight_rejected(self):
        filt = np.ones((1, 3, 3, 1))
        filt[0, 1, 1, 0] = 0
        with pytest.raises(ValidationError, match="zero"):
            interleave_filters(filt)


class TestPermutationInvariance:
    def test_consistent_permutation_preserves_outputs(self, rng):
        # commutativity of addition: permuting synapse order in both the
        # image matrix and the filter rows cannot change any popcount
        from binfer._kernels import kernels
        from binfer._kernels.bitops import pack_bits

        c, ifm, x = 3, 4, 4
        y = 27
        g = conv_geo(ifm, c)
        vals = rng.choice([-1, 1], size=(ifm, ifm, c)).astype(np.int8)
        filters = rng.choice([-1, 1], size=(x, 3, 3, c)).astype(np.int8)
        bn = _random_bn(rng, x, 6)
        thr = compile_thresholds(bn, y)

        plan = build_window_plan(g)
        buf = stream_pad_write(BitTensor.from_signed(vals), g)
        windows = generate_image_matrix(buf, plan)
        wrows = interleave_filters(filters)

        perm = rng.permutation(y)
        wbits = unpack_bits(windows, y)[:, perm]
        fbits = unpack_bits(wrows, y)[:, perm]
        out_a = kernels.mvtu_bin_stream(wrows, windows, y, thr.tau, thr.mode)
        out_b = kernels.mvtu_bin_stream(pack_bits(fbits), pack_bits(wbits), y, thr.tau, thr.mode)
        assert np.array_equal(out_a, out_b)
