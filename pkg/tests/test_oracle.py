"""The signed reference path: dense, direct convolution, pooling, network."""
import numpy as np
import pytest

from binfer import BatchNormParams, ValidationError, build_topology, generate_random_model
from binfer.oracle import (
    SignedTensor,
    _conv_pre,
    oracle_conv,
    oracle_dense,
    oracle_maxpool,
    oracle_network,
)


def _identity_bn(n):
    one, zero = (1,) * n, (0,) * n
    return BatchNormParams(one, zero, zero, one, zero)


class TestDense:
    def test_positive_sum(self):
        assert oracle_dense([[1, 1]], [1, 1], _identity_bn(1)).tolist() == [1]

    def test_tie_resolves_positive(self):
        # W.x = 0 and sign(0) = +1
        assert oracle_dense([[1, -1]], [1, 1], _identity_bn(1)).tolist() == [1]

    def test_negative_gamma_flips(self, rng):
        bn_pos = _identity_bn(1)
        bn_neg = BatchNormParams((-1,), (0,), (0,), (1,), (0,))
        for _ in range(50):
            x = rng.choice([-1, 1], size=5)
            w = rng.choice([-1, 1], size=(1, 5))
            a = oracle_dense(w, x, bn_pos)[0]
            b = oracle_dense(w, x, bn_neg)[0]
            dot = int((w[0] * x).sum())
            if dot != 0:
                assert a == -b
            else:  # both sides see sign(0)
                assert a == b == 1

    def test_dimension_mismatch(self):
        with pytest.raises(ValidationError):
            oracle_dense([[1, 1]], [1, 1, 1], _identity_bn(1))


class TestConv:
    def test_corner_preactivation_with_neg_one_border(self):
        # all-ones 4x4 input, all-ones filter: the corner window covers 4
        # real pixels and 5 border taps
        inp = np.ones((4, 4, 1), np.int8)
        filt = np.ones((1, 3, 3, 1), np.int8)
        pre = _conv_pre(filt, inp, -1)
        assert pre[0, 0, 0] == 4 * 1 + 5 * (-1) == -1
        assert pre[1, 1, 0] == 9

    def test_corner_preactivation_with_zero_border(self):
        inp = np.ones((4, 4, 1), np.int8)
        filt = np.ones((1, 3, 3, 1), np.int8)
        pre = _conv_pre(filt, inp, 0)
        assert pre[0, 0, 0] == 4  # 5 taps are zero

    def test_unpadded_single_window(self, rng):
        vals = rng.choice([-1, 1], size=(3, 3, 2))
        filt = rng.choice([-1, 1], size=(1, 3, 3, 2))
        pre = _conv_pre(filt, vals, None)
        assert pre.shape == (1, 1, 1)
        assert pre[0, 0, 0] == int((vals * filt[0]).sum())

    def test_neg_one_padding_equals_explicit_border(self, rng):
        vals = rng.choice([-1, 1], size=(5, 5, 3))
        filt = rng.choice([-1, 1], size=(4, 3, 3, 3))
        bn = _identity_bn(4)
        padded = oracle_conv(filt, SignedTensor(vals), -1, bn)
        bordered = np.full((7, 7, 3), -1, np.int8)
        bordered[1:-1, 1:-1] = vals
        explicit = oracle_conv(filt, SignedTensor(bordered), None, bn)
        assert padded == explicit

    def test_zero_and_neg_one_padding_are_distinct_functions(self):
        # single +1 pixel, all-ones filter: zero padding keeps the corner sum
        # positive, -1 padding drives it negative
        inp = SignedTensor(np.ones((1, 1, 1), np.int8))
        filt = np.ones((1, 3, 3, 1), np.int8)
        bn = _identity_bn(1)
        with_zero = oracle_conv(filt, inp, 0, bn)
        with_neg = oracle_conv(filt, inp, -1, bn)
        assert with_zero.values[0, 0, 0] == 1
        assert with_neg.values[0, 0, 0] == -1

    def test_too_small_without_padding(self):
        with pytest.raises(ValidationError):
            _conv_pre(np.ones((1, 3, 3, 1)), np.ones((2, 2, 1)), None)


class TestMaxpool:
    def test_single_window_cases(self):
        t = SignedTensor(np.array([-1, -1, -1, 1], np.int8).reshape(2, 2, 1))
        assert oracle_maxpool(t).values[0, 0, 0] == 1
        t = SignedTensor(np.full((2, 2, 1), -1, np.int8))
        assert oracle_maxpool(t).values[0, 0, 0] == -1

    def test_shape(self, rng):
        t = SignedTensor(rng.choice([-1, 1], size=(4, 4, 3)).astype(np.int8))
        out = oracle_maxpool(t)
        assert (out.height, out.width, out.channels) == (2, 2, 3)

    def test_odd_dims_rejected(self, rng):
        t = SignedTensor(rng.choice([-1, 1], size=(3, 4, 1)).astype(np.int8))
        with pytest.raises(ValidationError):
            oracle_maxpool(t)


class TestNetwork:
    def test_scores_shape_and_determinism(self, rng):
        topo = build_topology("1/4")
        model = (topo, generate_random_model(topo, 5))
        img = rng.integers(0, 256, (32, 32, 3), dtype=np.uint8)
        a = oracle_network(model, img)
        b = oracle_network(model, img)
        assert a.shape == (10,)
        assert np.array_equal(a, b)

    def test_needs_batchnorm_source(self, rng):
        from binfer.container import load_model, save_model

        topo = build_topology("1/4")
        layers = generate_random_model(topo, 5)
        save_model(topo, layers, "/tmp/oracle_needs_bn.bnn")
        loaded = load_model("/tmp/oracle_needs_bn.bnn")
        img = rng.integers(0, 256, (32, 32, 3), dtype=np.uint8)
        with pytest.raises(ValidationError, match="batchnorm"):
            oracle_network(loaded, img)


class TestSignedTensor:
    def test_rejects_other_values(self):
        with pytest.raises(ValidationError):
            SignedTensor(np.full((2, 2, 1), 2, np.int8))

    def test_allows_ternary(self):
        SignedTensor(np.array([-1, 0, 1, 0], np.int8).reshape(2, 2, 1))
