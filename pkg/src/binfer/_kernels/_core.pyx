# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel backend.

Mirrors binfer._kernels.pykernels exactly; see that module for the
function-level contracts and the threshold mode codes. Rows are packed
LSB-first into 64-bit words with zeroed tail bits.
"""

import numpy as np

from libc.stdint cimport int64_t, uint8_t, uint64_t

cdef extern from *:
    """
    static inline int binfer_popcnt64(unsigned long long v)
    { return __builtin_popcountll(v); }
    static inline int binfer_ctz64(unsigned long long v)
    { return __builtin_ctzll(v); }
    """
    int binfer_popcnt64(unsigned long long v) nogil
    int binfer_ctz64(unsigned long long v) nogil

NAME = "cython"

cdef uint64_t _ALL = <uint64_t>0xFFFFFFFFFFFFFFFFULL


cdef inline uint64_t _tail_mask(Py_ssize_t bit_len) nogil:
    cdef Py_ssize_t r = bit_len & 63
    if r == 0:
        return _ALL
    return ((<uint64_t>1) << r) - 1


cdef inline Py_ssize_t _words_needed(Py_ssize_t bits) nogil:
    return (bits + 63) >> 6


def popcount(words):
    cdef const uint64_t[::1] w = np.ascontiguousarray(words, dtype=np.uint64)
    cdef Py_ssize_t i
    cdef int64_t total = 0
    with nogil:
        for i in range(w.shape[0]):
            total += binfer_popcnt64(w[i])
    return int(total)


cdef inline int64_t _xnor_pop_row(
    const uint64_t* w, const uint64_t* x, Py_ssize_t nw, uint64_t mask
) nogil:
    cdef Py_ssize_t i
    cdef int64_t c = 0
    for i in range(nw - 1):
        c += binfer_popcnt64(~(w[i] ^ x[i]))
    c += binfer_popcnt64((~(w[nw - 1] ^ x[nw - 1])) & mask)
    return c


def xnor_popcount(a, b, Py_ssize_t y):
    cdef const uint64_t[::1] av = np.ascontiguousarray(a, dtype=np.uint64)
    cdef const uint64_t[::1] bv = np.ascontiguousarray(b, dtype=np.uint64)
    return int(_xnor_pop_row(&av[0], &bv[0], av.shape[0], _tail_mask(y)))


cdef inline int _decide(int64_t acc, int64_t tau, uint8_t mode) nogil:
    if mode == 0:
        return acc >= tau
    if mode == 1:
        return acc <= tau
    return mode == 2


def mvtu_bin_stream(weights, inputs, Py_ssize_t y, tau, mode):
    """Threshold decisions for n input vectors as one packed bit stream
    (input i owns bits [i*X, (i+1)*X))."""
    cdef const uint64_t[:, ::1] w = np.ascontiguousarray(weights, dtype=np.uint64)
    cdef const uint64_t[:, ::1] xs = np.ascontiguousarray(inputs, dtype=np.uint64)
    cdef const int64_t[::1] t = np.ascontiguousarray(tau, dtype=np.int64)
    cdef const uint8_t[::1] md = np.ascontiguousarray(mode, dtype=np.uint8)
    cdef Py_ssize_t X = w.shape[0], nw = w.shape[1], n = xs.shape[0]
    out_arr = np.zeros(_words_needed(n * X), np.uint64)
    cdef uint64_t[::1] out = out_arr
    cdef uint64_t mask = _tail_mask(y)
    cdef Py_ssize_t i, r, bit_idx
    cdef int64_t c
    with nogil:
        for i in range(n):
            for r in range(X):
                if md[r] >= 2:
                    if md[r] != 2:
                        continue
                else:
                    c = _xnor_pop_row(&w[r, 0], &xs[i, 0], nw, mask)
                    if not _decide(c, t[r], md[r]):
                        continue
                bit_idx = i * X + r
                out[bit_idx >> 6] |= (<uint64_t>1) << (bit_idx & 63)
    return out_arr


def mvtu_raw(weights, inp, Py_ssize_t y):
    """Signed dot products 2*popcount - y for one input vector."""
    cdef const uint64_t[:, ::1] w = np.ascontiguousarray(weights, dtype=np.uint64)
    cdef const uint64_t[::1] x = np.ascontiguousarray(inp, dtype=np.uint64)
    cdef Py_ssize_t X = w.shape[0], nw = w.shape[1]
    out_arr = np.empty(X, np.int64)
    cdef int64_t[::1] out = out_arr
    cdef uint64_t mask = _tail_mask(y)
    cdef Py_ssize_t r
    with nogil:
        for r in range(X):
            out[r] = 2 * _xnor_pop_row(&w[r, 0], &x[0], nw, mask) - y
    return out_arr


def mvtu_fx_stream(weights, pixels, Py_ssize_t y, tau, mode):
    """Fixed-point execution: acc = sum(+pixel where bit set, else -pixel),
    thresholded against the signed accumulator."""
    cdef const uint64_t[:, ::1] w = np.ascontiguousarray(weights, dtype=np.uint64)
    cdef const int64_t[:, ::1] px = np.ascontiguousarray(pixels, dtype=np.int64)
    cdef const int64_t[::1] t = np.ascontiguousarray(tau, dtype=np.int64)
    cdef const uint8_t[::1] md = np.ascontiguousarray(mode, dtype=np.uint8)
    cdef Py_ssize_t X = w.shape[0], nw = w.shape[1], n = px.shape[0]
    out_arr = np.zeros(_words_needed(n * X), np.uint64)
    cdef uint64_t[::1] out = out_arr
    cdef Py_ssize_t i, r, wi, base, bit_idx
    cdef int64_t total, acc
    cdef uint64_t bits
    with nogil:
        for i in range(n):
            total = 0
            for wi in range(y):
                total += px[i, wi]
            for r in range(X):
                if md[r] >= 2:
                    if md[r] != 2:
                        continue
                else:
                    # 2 * (sum of pixels at set bits) - total; tail bits of
                    # the weight row are zero by construction.
                    acc = 0
                    for wi in range(nw):
                        bits = w[r, wi]
                        base = wi << 6
                        while bits:
                            acc += px[i, base + binfer_ctz64(bits)]
                            bits &= bits - 1
                    acc = 2 * acc - total
                    if not _decide(acc, t[r], md[r]):
                        continue
                bit_idx = i * X + r
                out[bit_idx >> 6] |= (<uint64_t>1) << (bit_idx & 63)
    return out_arr


cdef inline void _copy_bits(
    const uint64_t* src, Py_ssize_t src_off, uint64_t* dst, Py_ssize_t dst_off,
    Py_ssize_t nbits
) nogil:
    """Splice nbits from src_off into a pre-zeroed destination at dst_off."""
    cdef Py_ssize_t sr, dr, take
    cdef uint64_t chunk
    while nbits > 0:
        sr = src_off & 63
        dr = dst_off & 63
        take = 64 - sr
        if 64 - dr < take:
            take = 64 - dr
        if nbits < take:
            take = nbits
        chunk = src[src_off >> 6] >> sr
        if take < 64:
            chunk &= ((<uint64_t>1) << take) - 1
        dst[dst_off >> 6] |= chunk << dr
        src_off += take
        dst_off += take
        nbits -= take


def copy_bits(src, Py_ssize_t src_off, dst, Py_ssize_t dst_off, Py_ssize_t nbits):
    """Exposed for tests: bit-field copy into a pre-zeroed destination."""
    cdef const uint64_t[::1] s = np.ascontiguousarray(src, dtype=np.uint64)
    cdef uint64_t[::1] d = dst
    _copy_bits(&s[0], src_off, &d[0], dst_off, nbits)


def gather_windows(buffer, addrs, Py_ssize_t channels, Py_ssize_t n_pixels):
    """Assemble packed (n_windows, k2*channels)-bit rows from the pixel-
    addressed buffer; pixel a occupies bits [a*channels, (a+1)*channels)."""
    cdef const uint64_t[::1] buf = np.ascontiguousarray(buffer, dtype=np.uint64)
    cdef const int64_t[:, ::1] ad = np.ascontiguousarray(addrs, dtype=np.int64)
    cdef Py_ssize_t n_win = ad.shape[0], k2 = ad.shape[1]
    cdef Py_ssize_t row_words = _words_needed(k2 * channels)
    out_arr = np.zeros((n_win, row_words), np.uint64)
    cdef uint64_t[:, ::1] out = out_arr
    cdef Py_ssize_t wi, tp
    with nogil:
        for wi in range(n_win):
            for tp in range(k2):
                _copy_bits(
                    &buf[0], ad[wi, tp] * channels, &out[wi, 0], tp * channels, channels
                )
    return out_arr


cdef inline int _get_bit(const uint64_t* words, Py_ssize_t idx) nogil:
    return (words[idx >> 6] >> (idx & 63)) & 1


def or_pool(words, Py_ssize_t h, Py_ssize_t w, Py_ssize_t c):
    """2x2/stride-2 Boolean OR pooling on a packed interleaved tensor."""
    cdef const uint64_t[::1] src = np.ascontiguousarray(words, dtype=np.uint64)
    cdef Py_ssize_t oh = h >> 1, ow = w >> 1
    out_arr = np.zeros(_words_needed(oh * ow * c), np.uint64)
    cdef uint64_t[::1] out = out_arr
    cdef Py_ssize_t r, q, ch, base0, base1, dst
    cdef int bit
    with nogil:
        for r in range(oh):
            for q in range(ow):
                base0 = ((2 * r) * w + 2 * q) * c
                base1 = ((2 * r + 1) * w + 2 * q) * c
                dst = (r * ow + q) * c
                for ch in range(c):
                    bit = (
                        _get_bit(&src[0], base0 + ch)
                        | _get_bit(&src[0], base0 + c + ch)
                        | _get_bit(&src[0], base1 + ch)
                        | _get_bit(&src[0], base1 + c + ch)
                    )
                    if bit:
                        out[(dst + ch) >> 6] |= (<uint64_t>1) << ((dst + ch) & 63)
    return out_arr
