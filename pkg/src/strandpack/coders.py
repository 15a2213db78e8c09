"""Entropy coding primitives.

* Binary arithmetic coder: 32-bit range, 64-bit low with cached-byte carry
  propagation, 17-bit probabilities, renormalization below 2**24, 5-byte flush.
* Multi-symbol range coder: 32-bit low with carry propagated back into the
  output buffer, totals up to 2**16, 4-byte flush.
* Order-1 adaptive quality coder built on the range coder.
* ``lz-ext``: opaque handoff to zstandard.

Coder state lives in small int64 arrays so the numba-compiled models in
:mod:`strandpack.bwtcm` and :mod:`strandpack.markov` can drive the same
primitives without Python overhead.
"""

from __future__ import annotations

import numpy as np
import zstandard
from numba import njit

from .errors import CorruptPayload
from .varint import Reader, encode_varint

PROB_BITS = 17
PROB_ONE = 1 << PROB_BITS
TOP = 1 << 24
MASK32 = 0xFFFFFFFF
MAX_TOTAL = 1 << 16

BIN_FLUSH_BYTES = 5
RANGE_FLUSH_BYTES = 4

# encoder state slots
LOW, RANGE, CACHE, CACHE_SIZE, OUT_POS = 0, 1, 2, 3, 4
# decoder state slots
CODE, DRANGE, IN_POS = 0, 1, 2


@njit(cache=True, nogil=True, inline="always")
def emit(st, out, byte):
    pos = st[OUT_POS]
    if pos >= len(out):
        grown = np.empty(max(16, 2 * len(out)), dtype=np.uint8)
        grown[:len(out)] = out
        out = grown
    out[pos] = byte
    st[OUT_POS] = pos + 1
    return out


@njit(cache=True, nogil=True)
def new_encoder_state():
    st = np.zeros(5, dtype=np.int64)
    st[RANGE] = MASK32
    st[CACHE_SIZE] = 1
    return st


# ---------------------------------------------------------------- binary coder

@njit(cache=True, nogil=True, inline="always")
def _bin_shift_low(st, out):
    low = st[LOW]
    if low < 0xFF000000 or low >= (1 << 32):
        carry = low >> 32
        temp = st[CACHE]
        while True:
            out = emit(st, out, (temp + carry) & 0xFF)
            temp = 0xFF
            st[CACHE_SIZE] -= 1
            if st[CACHE_SIZE] == 0:
                break
        st[CACHE] = (low >> 24) & 0xFF
    st[CACHE_SIZE] += 1
    st[LOW] = (low & 0x00FFFFFF) << 8
    return out


@njit(cache=True, nogil=True, inline="always")
def bin_encode(st, out, bit, q):
    """Code ``bit`` where ``q / 2**17`` is the probability of a one."""
    rng = st[RANGE]
    bound = (rng * q) >> PROB_BITS
    if bit:
        rng = bound
    else:
        st[LOW] += bound
        rng -= bound
    while rng < TOP:
        rng <<= 8
        out = _bin_shift_low(st, out)
    st[RANGE] = rng
    return out


@njit(cache=True, nogil=True)
def bin_flush(st, out):
    for _ in range(BIN_FLUSH_BYTES):
        out = _bin_shift_low(st, out)
    return out


@njit(cache=True, nogil=True, inline="always")
def next_byte(st, data):
    pos = st[IN_POS]
    st[IN_POS] = pos + 1
    if pos < len(data):
        return np.int64(data[pos])
    return np.int64(0)


@njit(cache=True, nogil=True)
def bin_decoder_state(data):
    st = np.zeros(3, dtype=np.int64)
    st[DRANGE] = MASK32
    for _ in range(BIN_FLUSH_BYTES):
        st[CODE] = ((st[CODE] << 8) | next_byte(st, data)) & MASK32
    return st


@njit(cache=True, nogil=True, inline="always")
def bin_decode(st, data, q):
    rng = st[DRANGE]
    code = st[CODE]
    bound = (rng * q) >> PROB_BITS
    if code < bound:
        rng = bound
        bit = 1
    else:
        code -= bound
        rng -= bound
        bit = 0
    while rng < TOP:
        rng <<= 8
        code = ((code << 8) | next_byte(st, data)) & MASK32
    st[DRANGE] = rng
    st[CODE] = code
    return bit


# ----------------------------------------------------------------- range coder

@njit(cache=True, nogil=True, inline="always")
def range_encode(st, out, cum_lo, freq, total):
    r = st[RANGE] // total
    low = st[LOW] + r * cum_lo
    rng = r * freq
    if low > MASK32:
        low &= MASK32
        i = st[OUT_POS] - 1
        while out[i] == 0xFF:
            out[i] = 0
            i -= 1
        out[i] += 1
    while rng < TOP:
        out = emit(st, out, (low >> 24) & 0xFF)
        low = (low << 8) & MASK32
        rng <<= 8
    st[LOW] = low
    st[RANGE] = rng
    return out


@njit(cache=True, nogil=True)
def range_flush(st, out):
    low = st[LOW]
    for _ in range(RANGE_FLUSH_BYTES):
        out = emit(st, out, (low >> 24) & 0xFF)
        low = (low << 8) & MASK32
    st[LOW] = low
    return out


@njit(cache=True, nogil=True)
def range_decoder_state(data):
    st = np.zeros(3, dtype=np.int64)
    st[DRANGE] = MASK32
    for _ in range(RANGE_FLUSH_BYTES):
        st[CODE] = ((st[CODE] << 8) | next_byte(st, data)) & MASK32
    return st


@njit(cache=True, nogil=True, inline="always")
def range_decode_freq(st, total):
    """Target cumulative frequency, or -1 when the code is outside the interval."""
    r = st[DRANGE] // total
    v = st[CODE] // r
    if v >= total:
        return -1
    return v


@njit(cache=True, nogil=True, inline="always")
def range_decode_update(st, data, cum_lo, freq, total):
    r = st[DRANGE] // total
    code = st[CODE] - r * cum_lo
    rng = r * freq
    while rng < TOP:
        code = ((code << 8) | next_byte(st, data)) & MASK32
        rng <<= 8
    st[CODE] = code
    st[DRANGE] = rng


# ------------------------------------------------------------ Python wrappers

def _finish(st, out) -> bytes:
    return out[:st[OUT_POS]].tobytes()


class BinEncoder:
    """Incremental binary arithmetic encoder."""

    def __init__(self, capacity: int = 1024):
        self._st = new_encoder_state()
        self._out = np.empty(capacity, dtype=np.uint8)

    def encode_bit(self, bit: int, q: int) -> None:
        self._out = _bin_encode_one(self._st, self._out, bit, q)

    def finish(self) -> bytes:
        self._out = bin_flush(self._st, self._out)
        return _finish(self._st, self._out)


class BinDecoder:
    def __init__(self, data: bytes):
        self._data = np.frombuffer(bytes(data), dtype=np.uint8)
        self._st = bin_decoder_state(self._data)

    def decode_bit(self, q: int) -> int:
        return int(_bin_decode_one(self._st, self._data, q))


class RangeEncoder:
    """Incremental multi-symbol range encoder over cumulative frequencies."""

    def __init__(self, capacity: int = 1024):
        self._st = new_encoder_state()
        self._out = np.empty(capacity, dtype=np.uint8)

    def encode(self, cum_lo: int, cum_hi: int, total: int) -> None:
        if not 0 <= cum_lo < cum_hi <= total <= MAX_TOTAL:
            raise ValueError(f"bad interval [{cum_lo}, {cum_hi}) of {total}")
        self._out = _range_encode_one(self._st, self._out, cum_lo, cum_hi - cum_lo, total)

    def finish(self) -> bytes:
        self._out = range_flush(self._st, self._out)
        return _finish(self._st, self._out)


class RangeDecoder:
    def __init__(self, data: bytes):
        self._data = np.frombuffer(bytes(data), dtype=np.uint8)
        self._st = range_decoder_state(self._data)

    def decode_freq(self, total: int) -> int:
        v = int(_range_freq_one(self._st, total))
        if v < 0:
            raise CorruptPayload("range decoder left the coding interval")
        return v

    def update(self, cum_lo: int, cum_hi: int, total: int) -> None:
        _range_update_one(self._st, self._data, cum_lo, cum_hi - cum_lo, total)


@njit(cache=True, nogil=True)
def _bin_encode_one(st, out, bit, q):
    return bin_encode(st, out, bit, q)


@njit(cache=True, nogil=True)
def _bin_decode_one(st, data, q):
    return bin_decode(st, data, q)


@njit(cache=True, nogil=True)
def _range_encode_one(st, out, cum_lo, freq, total):
    return range_encode(st, out, cum_lo, freq, total)


@njit(cache=True, nogil=True)
def _range_freq_one(st, total):
    return range_decode_freq(st, total)


@njit(cache=True, nogil=True)
def _range_update_one(st, data, cum_lo, freq, total):
    range_decode_update(st, data, cum_lo, freq, total)


@njit(cache=True, nogil=True)
def _encode_bits(bits, probs):
    st = new_encoder_state()
    out = np.empty(len(bits) // 8 + 64, dtype=np.uint8)
    for i in range(len(bits)):
        out = bin_encode(st, out, bits[i], probs[i])
    out = bin_flush(st, out)
    return out[:st[OUT_POS]]


@njit(cache=True, nogil=True)
def _decode_bits(data, probs):
    st = bin_decoder_state(data)
    bits = np.empty(len(probs), dtype=np.uint8)
    for i in range(len(probs)):
        bits[i] = bin_decode(st, data, probs[i])
    return bits


def encode_bits(bits, probs) -> bytes:
    """Code a bit sequence under a known probability schedule (q / 2**17 of a one)."""
    bits = np.asarray(bits, dtype=np.uint8)
    probs = np.asarray(probs, dtype=np.int64)
    if probs.shape != bits.shape:
        probs = np.broadcast_to(probs, bits.shape).copy()
    return _encode_bits(bits, probs).tobytes()


def decode_bits(data: bytes, probs) -> np.ndarray:
    probs = np.asarray(probs, dtype=np.int64)
    return _decode_bits(np.frombuffer(bytes(data), dtype=np.uint8), probs)


# ---------------------------------------------------------- order-1 quality

QUAL_INC = 32
QUAL_LIMIT = MAX_TOTAL - 32
MODE_O1 = 0
MODE_STORED = 1


@njit(cache=True, nogil=True)
def _o1_encode(data):
    freq = np.ones((256, 256), dtype=np.int64)
    totals = np.full(256, 256, dtype=np.int64)
    st = new_encoder_state()
    out = np.empty(len(data) // 2 + 64, dtype=np.uint8)
    prev = 0
    for i in range(len(data)):
        sym = data[i]
        row = freq[prev]
        cum = 0
        for a in range(sym):
            cum += row[a]
        out = range_encode(st, out, cum, row[sym], totals[prev])
        row[sym] += QUAL_INC
        totals[prev] += QUAL_INC
        if totals[prev] > QUAL_LIMIT:
            t = 0
            for a in range(256):
                row[a] = (row[a] + 1) >> 1
                t += row[a]
            totals[prev] = t
        prev = sym
    out = range_flush(st, out)
    return out[:st[OUT_POS]]


@njit(cache=True, nogil=True)
def _o1_decode(payload, n):
    freq = np.ones((256, 256), dtype=np.int64)
    totals = np.full(256, 256, dtype=np.int64)
    st = range_decoder_state(payload)
    res = np.empty(n, dtype=np.uint8)
    prev = 0
    for i in range(n):
        row = freq[prev]
        total = totals[prev]
        target = range_decode_freq(st, total)
        if target < 0:
            return res, False
        sym = 0
        cum = 0
        while cum + row[sym] <= target:
            cum += row[sym]
            sym += 1
        range_decode_update(st, payload, cum, row[sym], total)
        res[i] = sym
        row[sym] += QUAL_INC
        totals[prev] += QUAL_INC
        if totals[prev] > QUAL_LIMIT:
            t = 0
            for a in range(256):
                row[a] = (row[a] + 1) >> 1
                t += row[a]
            totals[prev] = t
        prev = sym
    return res, True


def quality_encode(data: bytes) -> bytes:
    """Order-1 adaptive coding; falls back to stored bytes when that is smaller."""
    data = bytes(data)
    head = encode_varint(len(data))
    if data:
        coded = _o1_encode(np.frombuffer(data, dtype=np.uint8)).tobytes()
        if len(coded) < len(data):
            return bytes([MODE_O1]) + head + coded
    return bytes([MODE_STORED]) + head + data


def quality_decode(payload: bytes, expected_n: int | None = None) -> bytes:
    rd = Reader(payload)
    mode = rd.u8()
    n = rd.varint()
    if expected_n is not None and n != expected_n:
        raise CorruptPayload(f"quality block declares {n} bytes, expected {expected_n}")
    body = bytes(payload[rd.pos:])
    if mode == MODE_STORED:
        if len(body) != n:
            raise CorruptPayload("stored quality block has wrong length")
        return body
    if mode != MODE_O1:
        raise CorruptPayload(f"unknown quality coder mode {mode}")
    res, ok = _o1_decode(np.frombuffer(body, dtype=np.uint8), n)
    if not ok:
        raise CorruptPayload("quality payload left the coding interval")
    return res.tobytes()


# ------------------------------------------------------------------- lz-ext

ZSTD_LEVEL = 19


def lz_encode(data: bytes, level: int = ZSTD_LEVEL) -> bytes:
    return zstandard.ZstdCompressor(level=level, write_content_size=True,
                                    write_checksum=False).compress(bytes(data))


def lz_decode(payload: bytes) -> bytes:
    try:
        return zstandard.ZstdDecompressor().decompress(bytes(payload))
    except zstandard.ZstdError as exc:
        raise CorruptPayload(f"lz-ext payload: {exc}") from exc
