"""XNOR-popcount kernels, threshold compilation and the execution modes.

Threshold compilation is correct by definition when the compiled integer
comparison reproduces the exact batchnorm-sign decision for every reachable
accumulator value; these tests sweep that domain exhaustively.
"""
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from binfer import (
    AccumulatorSpec,
    BatchNormParams,
    BinaryLayer,
    BitTensor,
    Direction,
    IoMode,
    LayerGeometry,
    LayerKind,
    Padding,
    ThresholdEntry,
    ThresholdVector,
    ValidationError,
    compile_fixedpoint_thresholds,
    compile_thresholds,
    mvtu_execute,
    mvtu_execute_multi,
    mvtu_fixedpoint,
    mvtu_raw,
    xnor_popcount,
)
from binfer.model import pack_dense_weights
from binfer.oracle import oracle_dense


def _bn1(gamma=1, beta=0, mu=0, sigma=1, bias=0):
    return BatchNormParams((gamma,), (beta,), (mu,), (sigma,), (bias,))


def _vec(bits):
    return BitTensor.from_bits(1, 1, len(bits), np.array(bits, np.uint8))


def _fc_layer(matrix, thresholds, io_mode=IoMode.BINARY, bn=None):
    matrix = np.asarray(matrix)
    x, y = matrix.shape
    g = LayerGeometry(LayerKind.FULLY_CONNECTED, y, x, y, 1, 1, Padding.NONE)
    return BinaryLayer(g, pack_dense_weights(matrix), thresholds, io_mode, bn=bn)


def _bn_sign(gamma, beta, mu, sigma, bias, dot):
    """Independent exact decision: sign(gamma*(dot + bias - mu)/sigma + beta)."""
    v = Fraction(gamma) * (Fraction(dot) + Fraction(bias) - Fraction(mu)) / Fraction(sigma)
    return 1 if v + Fraction(beta) >= 0 else -1


class TestXnorPopcount:
    def test_identical_rows(self, rng):
        for y in (1, 5, 64, 100):
            bits = rng.integers(0, 2, y, dtype=np.uint8)
            r = xnor_popcount(_vec(bits), _vec(bits), y)
            assert r.popcount == y and r.dot == y

    def test_hand_example(self):
        r = xnor_popcount(_vec([1, 0, 1, 0]), _vec([1, 1, 0, 0]), 4)
        assert r.popcount == 2 and r.dot == 0

    def test_word_boundary_matches_signed_products(self, rng):
        y = 70
        for _ in range(50):
            a = rng.integers(0, 2, y, dtype=np.uint8)
            b = rng.integers(0, 2, y, dtype=np.uint8)
            dot = int(((2 * a.astype(int) - 1) * (2 * b.astype(int) - 1)).sum())
            assert xnor_popcount(_vec(a), _vec(b), y).dot == dot

    @settings(max_examples=120, deadline=None)
    @given(y=st.integers(1, 140), seed=st.integers(0, 2**32 - 1))
    def test_dot_identity_property(self, y, seed):
        # 2*popcount(xnor) - y is the signed dot product, any length
        r = np.random.default_rng(seed)
        a = r.integers(0, 2, y, dtype=np.uint8)
        b = r.integers(0, 2, y, dtype=np.uint8)
        dot = int(((2 * a.astype(int) - 1) * (2 * b.astype(int) - 1)).sum())
        assert xnor_popcount(_vec(a), _vec(b), y).dot == dot

    def test_length_mismatch(self):
        with pytest.raises(ValidationError):
            xnor_popcount(_vec([1, 0]), _vec([1, 0, 1]), 3)


class TestAccumulatorSpec:
    @pytest.mark.parametrize("y,t", [(1, 1), (2, 2), (3, 3), (4, 3), (512, 10), (1152, 12)])
    def test_width(self, y, t):
        spec = AccumulatorSpec.for_synapses(y)
        assert spec.t_bits == t
        assert (1 << spec.t_bits) > y  # every popcount in [0, y] fits

    def test_popcounts_fit(self, rng):
        for y in (12, 27, 70):
            spec = AccumulatorSpec.for_synapses(y)
            a = rng.integers(0, 2, y, dtype=np.uint8)
            b = rng.integers(0, 2, y, dtype=np.uint8)
            assert xnor_popcount(_vec(a), _vec(b), y).popcount <= spec.max_count


class TestCompileThresholds:
    def test_plain_sign(self):
        (e,) = compile_thresholds(_bn1(), 4)
        assert e.direction is Direction.AT_LEAST and e.tau_plus == 2
        # +1 iff popcount >= 2, i.e. dot >= 0 (ties resolve positive)
        assert [e.decide(c) for c in range(5)] == [-1, -1, 1, 1, 1]

    def test_shifted_positive_slope(self):
        (e,) = compile_thresholds(_bn1(gamma=2, mu=1), 4)
        assert e.direction is Direction.AT_LEAST and e.tau_plus == 3
        for c in range(5):
            assert e.decide(c) == _bn_sign(2, 0, 1, 1, 0, 2 * c - 4)

    def test_negative_slope(self):
        (e,) = compile_thresholds(_bn1(gamma=-1), 4)
        assert e.direction is Direction.AT_MOST and e.tau_plus == 2
        for c in range(5):
            assert e.decide(c) == _bn_sign(-1, 0, 0, 1, 0, 2 * c - 4)

    def test_zero_gamma_constant(self):
        (e,) = compile_thresholds(_bn1(gamma=0, beta=-3), 4)
        assert e.constant == -1
        (e,) = compile_thresholds(_bn1(gamma=0, beta=0), 4)
        assert e.constant == 1  # sign(0) = +1

    def test_degenerate_always_never(self):
        (always,) = compile_thresholds(_bn1(mu=-1000), 8)
        assert all(always.decide(c) == 1 for c in range(9))
        (never,) = compile_thresholds(_bn1(mu=1000), 8)
        assert all(never.decide(c) == -1 for c in range(9))
        # at_most that can never fire must not clamp onto c = 0
        (e,) = compile_thresholds(_bn1(gamma=-1, mu=-1000), 8)
        assert all(e.decide(c) == -1 for c in range(9))

    def test_sigma_must_be_positive(self):
        with pytest.raises(ValidationError):
            compile_thresholds(_bn1(sigma=-1), 4)

    @pytest.mark.parametrize("y", range(1, 13))
    def test_exhaustive_sweep_small_y(self, y, rng):
        # every popcount in [0, y] for 50 random rational parameter sets
        for _ in range(50):
            p = [
                Fraction(int(rng.integers(-8, 9)), int(rng.integers(1, 5)))
                for _ in range(4)
            ]
            gamma, beta, mu, bias = p
            sigma = Fraction(int(rng.integers(1, 9)), int(rng.integers(1, 5)))
            (e,) = compile_thresholds(
                BatchNormParams((gamma,), (beta,), (mu,), (sigma,), (bias,)), y
            )
            for c in range(y + 1):
                assert e.decide(c) == _bn_sign(gamma, beta, mu, sigma, bias, 2 * c - y)

    def test_fixedpoint_domain(self, rng):
        y = 27
        lo, hi = -255 * y, 255 * y + 1
        for _ in range(30):
            gamma = Fraction(int(rng.integers(-8, 9)), int(rng.integers(1, 5)))
            beta = Fraction(int(rng.integers(-8, 9)), int(rng.integers(1, 5)))
            mu = Fraction(int(rng.integers(-3000, 3001)), int(rng.integers(1, 5)))
            sigma = Fraction(int(rng.integers(1, 9)), int(rng.integers(1, 5)))
            bias = Fraction(int(rng.integers(-500, 501)), int(rng.integers(1, 3)))
            (e,) = compile_fixedpoint_thresholds(
                BatchNormParams((gamma,), (beta,), (mu,), (sigma,), (bias,)), y
            )
            if e.constant is None:
                assert lo <= e.tau_plus <= hi
            for acc in rng.integers(lo, hi, size=64):
                acc = int(acc)
                assert e.decide(acc) == _bn_sign(gamma, beta, mu, sigma, bias, acc)


class TestExecute:
    def test_two_neuron_hand_case(self):
        thr = ThresholdVector([ThresholdEntry(2, Direction.AT_LEAST)] * 2)
        layer = _fc_layer([[1, 1], [-1, -1]], thr)
        out = mvtu_execute(layer, _vec([1, 1]))
        assert out.to_bits().tolist() == [1, 0]

    def test_matches_reference_dense(self, rng):
        x, y = 16, 27
        w = rng.choice([-1, 1], size=(x, y))
        bn = BatchNormParams(
            *(tuple(Fraction(int(rng.integers(-4, 5)), 2) for _ in range(x)) for _ in range(3)),
            tuple(Fraction(int(rng.integers(1, 5))) for _ in range(x)),
            tuple(Fraction(int(rng.integers(-6, 7)), 2) for _ in range(x)),
        )
        layer = _fc_layer(w, compile_thresholds(bn, y))
        for _ in range(100):
            xin = rng.choice([-1, 1], size=y)
            expect = oracle_dense(w, xin, bn)
            got = mvtu_execute(layer, BitTensor.from_signed(xin.reshape(1, 1, -1)))
            assert np.array_equal(got.to_signed().reshape(-1), expect)

    def test_constant_thresholds_ignore_input(self, rng):
        thr = ThresholdVector([ThresholdEntry(0, Direction.AT_LEAST, constant=1)] * 3)
        layer = _fc_layer(rng.choice([-1, 1], size=(3, 8)), thr)
        for _ in range(5):
            out = mvtu_execute(layer, _vec(rng.integers(0, 2, 8, dtype=np.uint8)))
            assert out.to_bits().tolist() == [1, 1, 1]

    def test_mode_mismatch(self, rng):
        layer = _fc_layer(rng.choice([-1, 1], size=(2, 4)), None, io_mode=IoMode.RAW_OUT)
        with pytest.raises(ValidationError):
            mvtu_execute(layer, _vec([1, 0, 1, 0]))


class TestExecuteMulti:
    def _layer(self, rng, x=6, y=20):
        thr = ThresholdVector(
            [ThresholdEntry(int(rng.integers(0, y + 2)), Direction.AT_LEAST) for _ in range(x)]
        )
        return _fc_layer(rng.choice([-1, 1], size=(x, y)), thr), y

    def test_single_vector_degenerate(self, rng):
        layer, y = self._layer(rng)
        v = _vec(rng.integers(0, 2, y, dtype=np.uint8))
        assert mvtu_execute_multi(layer, [v])[0] == mvtu_execute(layer, v)

    def test_matches_pointwise(self, rng):
        layer, y = self._layer(rng)
        vs = [_vec(rng.integers(0, 2, y, dtype=np.uint8)) for _ in range(4)]
        multi = mvtu_execute_multi(layer, vs)
        assert multi == [mvtu_execute(layer, v) for v in vs]

    def test_duplicated_inputs(self, rng):
        layer, y = self._layer(rng)
        v = _vec(rng.integers(0, 2, y, dtype=np.uint8))
        a, b = mvtu_execute_multi(layer, [v, v])
        assert a == b

    def test_empty_rejected(self, rng):
        layer, _ = self._layer(rng)
        with pytest.raises(ValidationError):
            mvtu_execute_multi(layer, [])


class TestFixedpoint:
    def _probe(self, matrix, pixels, tau):
        """Layer whose single threshold is at_least(tau); reveals the accumulator."""
        thr = ThresholdVector([ThresholdEntry(tau, Direction.AT_LEAST)] * len(matrix))
        layer = _fc_layer(matrix, thr, io_mode=IoMode.FIXEDPOINT_IN)
        return mvtu_fixedpoint(layer, np.array(pixels)).to_bits()

    def test_all_positive_weights_accumulate_to_y(self):
        y = 6
        w = np.ones((1, y), int)
        assert self._probe(w, [1] * y, y)[0] == 1  # acc >= y
        assert self._probe(w, [1] * y, y + 1)[0] == 0  # acc < y + 1  => acc == y

    def test_mixed_weights_hand_case(self):
        w = np.array([[1, -1]])
        assert self._probe(w, [2, 3], -1)[0] == 1
        assert self._probe(w, [2, 3], 0)[0] == 0  # acc == -1

    def test_matches_reference_first_layer(self, rng):
        x, y = 8, 27
        w = rng.choice([-1, 1], size=(x, y))
        bn = BatchNormParams(
            tuple(Fraction(int(rng.integers(-4, 5)), 2) for _ in range(x)),
            tuple(Fraction(int(rng.integers(-8, 9)), 2) for _ in range(x)),
            tuple(Fraction(int(rng.integers(-800, 801)), 2) for _ in range(x)),
            tuple(Fraction(int(rng.integers(1, 5))) for _ in range(x)),
            tuple(Fraction(int(rng.integers(-100, 101))) for _ in range(x)),
        )
        layer = _fc_layer(w, compile_fixedpoint_thresholds(bn, y), io_mode=IoMode.FIXEDPOINT_IN, bn=bn)
        for _ in range(50):
            px = rng.integers(0, 256, size=y)
            got = mvtu_fixedpoint(layer, px).to_signed().reshape(-1)
            assert np.array_equal(got, oracle_dense(w, px, bn))

    def test_rejects_out_of_range_pixels(self, rng):
        layer = _fc_layer(
            rng.choice([-1, 1], size=(2, 3)),
            ThresholdVector([ThresholdEntry(0, Direction.AT_LEAST)] * 2),
            io_mode=IoMode.FIXEDPOINT_IN,
        )
        with pytest.raises(ValidationError):
            mvtu_fixedpoint(layer, np.array([0, 1, 256]))


class TestRaw:
    def test_identity_and_complement(self, rng):
        y = 33
        bits = rng.integers(0, 2, y, dtype=np.uint8)
        layer = _fc_layer(
            np.vstack([2 * bits.astype(int) - 1, 1 - 2 * bits.astype(int)]),
            None,
            io_mode=IoMode.RAW_OUT,
        )
        scores = mvtu_raw(layer, _vec(bits))
        assert scores.tolist() == [y, -y]

    def test_matches_reference_scores(self, rng):
        from binfer.oracle import oracle_raw_dense

        x, y = 10, 64
        w = rng.choice([-1, 1], size=(x, y))
        layer = _fc_layer(w, None, io_mode=IoMode.RAW_OUT)
        for _ in range(50):
            xin = rng.choice([-1, 1], size=y)
            got = mvtu_raw(layer, BitTensor.from_signed(xin.reshape(1, 1, -1)))
            assert np.array_equal(got, oracle_raw_dense(w, xin))
