"""OR-pooling and its streaming line-buffer form."""
import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from binfer import BitTensor, ValidationError, or_pool
from binfer.oracle import SignedTensor, binarize, oracle_maxpool
from binfer.pool import StreamingPooler, line_buffer_pool, rows_to_tensor, tensor_rows


class TestOrPool:
    def test_single_window_or(self):
        t = BitTensor.from_bits(2, 2, 1, np.array([0, 0, 0, 1], np.uint8))
        assert or_pool(t).to_bits().tolist() == [1]

    def test_all_zero(self):
        t = BitTensor.zeros(4, 4, 3)
        assert or_pool(t).to_bits().sum() == 0

    def test_shape(self, rng):
        t = BitTensor.from_signed(rng.choice([-1, 1], size=(8, 6, 5)))
        out = or_pool(t)
        assert (out.height, out.width, out.channels) == (4, 3, 5)

    def test_odd_dims_rejected(self, rng):
        t = BitTensor.from_signed(rng.choice([-1, 1], size=(3, 4, 1)))
        with pytest.raises(ValidationError):
            or_pool(t)

    def test_exhaustive_2x2x1_equals_max_then_binarize(self):
        for bits in itertools.product((0, 1), repeat=4):
            t = BitTensor.from_bits(2, 2, 1, np.array(bits, np.uint8))
            pooled = or_pool(t)
            reference = binarize(oracle_maxpool(SignedTensor(t.to_signed())).values)
            assert np.array_equal(pooled.to_signed(), reference)

    @settings(max_examples=150, deadline=None)
    @given(
        h=st.integers(1, 8),
        w=st.integers(1, 8),
        c=st.integers(1, 33),
        seed=st.integers(0, 2**32 - 1),
    )
    def test_random_equals_max_then_binarize(self, h, w, c, seed):
        # pooling commutes with binarization once inputs are binary: OR on
        # bits is max on {-1, +1}
        values = np.random.default_rng(seed).choice([-1, 1], size=(2 * h, 2 * w, c))
        t = BitTensor.from_signed(values)
        reference = binarize(oracle_maxpool(SignedTensor(t.to_signed())).values)
        assert np.array_equal(or_pool(t).to_signed(), reference)


class TestLineBufferPool:
    def test_two_rows_emit_once(self, rng):
        t = BitTensor.from_signed(rng.choice([-1, 1], size=(2, 4, 3)))
        out = list(line_buffer_pool(tensor_rows(t), 4, 3))
        assert len(out) == 1

    def test_equals_or_pool(self, rng):
        for _ in range(100):
            h = 2 * int(rng.integers(1, 9))
            w = 2 * int(rng.integers(1, 9))
            c = int(rng.integers(1, 17))
            t = BitTensor.from_signed(rng.choice([-1, 1], size=(h, w, c)))
            rows = line_buffer_pool(tensor_rows(t), w, c)
            streamed = rows_to_tensor(rows, h // 2, w // 2, c)
            assert streamed == or_pool(t)

    def test_buffer_residency_bound(self, rng):
        w, c = 16, 8
        pooler = StreamingPooler(w, c)
        t = BitTensor.from_signed(rng.choice([-1, 1], size=(10, w, c)))
        for row in tensor_rows(t):
            pooler.push_row(row)
        assert pooler.max_buffered_bits <= 2 * w * c

    def test_odd_row_count_rejected(self, rng):
        t = BitTensor.from_signed(rng.choice([-1, 1], size=(3, 4, 1)))
        with pytest.raises(ValidationError):
            list(line_buffer_pool(tensor_rows(t), 4, 1))
