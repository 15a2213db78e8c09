"""Post-BWT bitwise context-mixing coder.

Each byte is coded MSB-first through a depth-8 binary context tree.  Three
16-bit counter families (order-0, order-1 on the previous byte, and a gapped
order-1 on the byte before that, which shares the order-1 table) are blended
with fixed weights 6:6:4 over 16, refined by a run-conditioned interpolated
SSE grid, and fed to the binary arithmetic coder as a 17-bit probability.
Counters adapt by shift-based exponential moves at rates 3, 5 and 7.

The block is split into independent chunks of ``CHUNK_SIZE`` bytes, each with
fresh model state, so chunks encode and decode in parallel.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import bwt as _bwt
from .coders import (OUT_POS, bin_decode, bin_decoder_state, bin_encode, bin_flush,
                     new_encoder_state)
from .errors import ChunkSizeMismatch, CorruptBlock

CHUNK_SIZE = _bwt.CHUNK_SIZE
TAU_O0 = 3
TAU_O1 = 5
TAU_SSE = 7
SSE_ROWS = 512
SSE_COLS = 17
COUNTER_INIT = 1 << 15
Q_MAX = (1 << 17) - 1


@njit(cache=True, nogil=True, inline="always")
def ema_update(v, bit, tau):
    if bit:
        return v + ((65535 - v) >> tau)
    return v - (v >> tau)


def fresh_sse() -> np.ndarray:
    return np.tile(np.minimum(np.arange(SSE_COLS, dtype=np.int64) << 12, 65535),
                   (SSE_ROWS, 1)).astype(np.uint16)


@dataclass
class CmState:
    """Model state of one chunk; fields mirror the counter families."""

    u0: np.ndarray = field(default_factory=lambda: np.full(256, COUNTER_INIT, dtype=np.uint16))
    u12: np.ndarray = field(default_factory=lambda: np.full((256, 256), COUNTER_INIT, dtype=np.uint16))
    sse: np.ndarray = field(default_factory=fresh_sse)
    p: int = 0
    q: int = 0
    run_len: int = 0
    c: int = 1
    # filled by predict() for the following update()
    _j: int = 0
    _row: int = 0

    @property
    def f(self) -> int:
        return 1 if self.run_len > 2 else 0

    def predict(self) -> tuple[int, int, int, int]:
        """Return (p_hat, q, j, frac) for the next bit; q is over 2**17."""
        c = self.c
        p_hat = (6 * (int(self.u0[c]) + int(self.u12[self.p, c])) + 4 * int(self.u12[self.q, c])) // 16
        j = p_hat >> 12
        frac = p_hat & 0xFFF
        row = 2 * c + self.f
        lo = int(self.sse[row, j])
        hi = int(self.sse[row, j + 1])
        s_hat = lo + (((hi - lo) * frac) >> 12)
        q = min(max(p_hat + s_hat, 1), Q_MAX)
        self._j, self._row = j, row
        return p_hat, q, j, frac

    def update(self, bit: int) -> None:
        c = self.c
        self.u0[c] = ema_update(int(self.u0[c]), bit, TAU_O0)
        self.u12[self.p, c] = ema_update(int(self.u12[self.p, c]), bit, TAU_O1)
        self.u12[self.q, c] = ema_update(int(self.u12[self.q, c]), bit, TAU_O1)
        row, j = self._row, self._j
        self.sse[row, j] = ema_update(int(self.sse[row, j]), bit, TAU_SSE)
        self.sse[row, j + 1] = ema_update(int(self.sse[row, j + 1]), bit, TAU_SSE)
        c = 2 * c + bit
        if c >= 256:
            byte = c - 256
            self.run_len = self.run_len + 1 if byte == self.p else 1
            self.q = self.p
            self.p = byte
            c = 1
        self.c = c


@njit(cache=True, nogil=True)
def _code_chunk(data, n, payload, decode):
    """Shared encode/decode loop; the model sees identical bits on both sides."""
    u0 = np.full(256, COUNTER_INIT, dtype=np.int64)
    u12 = np.full((256, 256), COUNTER_INIT, dtype=np.int64)
    sse = np.empty((SSE_ROWS, SSE_COLS), dtype=np.int64)
    for r in range(SSE_ROWS):
        for j in range(SSE_COLS):
            sse[r, j] = min(j << 12, 65535)
    out = np.empty(n // 4 + 64, dtype=np.uint8) if not decode else np.empty(1, dtype=np.uint8)
    res = np.empty(n, dtype=np.uint8)
    if decode:
        st = bin_decoder_state(payload)
    else:
        st = new_encoder_state()
    p = 0
    q = 0
    run_len = 0
    for i in range(n):
        f = 1 if run_len > 2 else 0
        c = 1
        byte = data[i] if not decode else 0
        for k in range(7, -1, -1):
            p_hat = (6 * (u0[c] + u12[p, c]) + 4 * u12[q, c]) >> 4
            j = p_hat >> 12
            frac = p_hat & 0xFFF
            row = 2 * c + f
            lo = sse[row, j]
            s_hat = lo + (((sse[row, j + 1] - lo) * frac) >> 12)
            qv = p_hat + s_hat
            if qv < 1:
                qv = 1
            elif qv > Q_MAX:
                qv = Q_MAX
            if decode:
                bit = bin_decode(st, payload, qv)
            else:
                bit = (byte >> k) & 1
                out = bin_encode(st, out, bit, qv)
            u0[c] = ema_update(u0[c], bit, TAU_O0)
            u12[p, c] = ema_update(u12[p, c], bit, TAU_O1)
            u12[q, c] = ema_update(u12[q, c], bit, TAU_O1)
            sse[row, j] = ema_update(sse[row, j], bit, TAU_SSE)
            sse[row, j + 1] = ema_update(sse[row, j + 1], bit, TAU_SSE)
            c = 2 * c + bit
        byte = c - 256
        res[i] = byte
        if byte == p:
            run_len += 1
        else:
            run_len = 1
        q = p
        p = byte
    if not decode:
        out = bin_flush(st, out)
        return out[:st[OUT_POS]]
    return res


def encode_chunk(data: bytes) -> bytes:
    arr = np.frombuffer(bytes(data), dtype=np.uint8)
    return _code_chunk(arr, len(arr), np.empty(1, dtype=np.uint8), False).tobytes()


def decode_chunk(payload: bytes, n: int) -> bytes:
    buf = np.frombuffer(bytes(payload), dtype=np.uint8)
    return _code_chunk(np.empty(1, dtype=np.uint8), n, buf, True).tobytes()


def chunk_bounds(n: int, chunk_size: int = CHUNK_SIZE) -> list[tuple[int, int]]:
    return [(lo, min(n, lo + chunk_size)) for lo in range(0, n, chunk_size)]


def _map(fn, items, threads: int):
    if threads <= 1 or len(items) <= 1:
        return [fn(*it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda it: fn(*it), items))


def encode_block(l: bytes, *, threads: int = 1, chunk_size: int = CHUNK_SIZE) -> tuple[list[int], bytes]:
    """Code the BWT column in independent chunks; returns (chunk sizes, payload)."""
    l = bytes(l)
    parts = _map(lambda lo, hi: encode_chunk(l[lo:hi]), chunk_bounds(len(l), chunk_size), threads)
    return [len(p) for p in parts], b"".join(parts)


def decode_block(payload: bytes, n: int, sizes: list[int], *, threads: int = 1,
                 chunk_size: int = CHUNK_SIZE) -> bytes:
    bounds = chunk_bounds(n, chunk_size)
    if len(bounds) != len(sizes) or sum(sizes) != len(payload):
        raise ChunkSizeMismatch(
            f"{len(sizes)} chunk sizes summing to {sum(sizes)} for {len(bounds)} chunks "
            f"in a {len(payload)}-byte payload")
    jobs = []
    off = 0
    for (lo, hi), size in zip(bounds, sizes):
        jobs.append((payload[off:off + size], hi - lo))
        off += size
    return b"".join(_map(decode_chunk, jobs, threads))


def compress(data: bytes, *, threads: int = 1, sa_width: int | None = None) -> bytes:
    """BWT followed by chunked context-mixing coding; metadata first."""
    data = bytes(data)
    if not data:
        return b""
    block = _bwt.bwt_forward(data, sa_width=sa_width)
    sizes, payload = encode_block(block.l, threads=threads)
    return _bwt.serialize_meta(block, sizes, sa_width=sa_width) + payload


def decompress(payload: bytes, *, threads: int = 1, expected_n: int | None = None) -> bytes:
    if not payload:
        if expected_n:
            raise CorruptBlock("empty payload for a non-empty block")
        return b""
    head, pos = _bwt.parse_meta(payload)
    if expected_n is not None and head["n"] != expected_n:
        raise CorruptBlock(f"block declares {head['n']} bytes, index says {expected_n}")
    if head["aux"] is not None and (head["stride"] != _bwt.stride_for(head["n"])
                                    or int(head["aux"].max()) >= head["n"]):
        raise CorruptBlock("anchor table inconsistent with block length")
    body = payload[pos:]
    l = decode_block(body, head["n"], head["chunk_sizes"], threads=threads)
    block = _bwt.BwtBlock(l, head["n"], head["sa_width"], head["primary"], head["aux"], head["stride"])
    if not 0 <= block.primary < block.n:
        raise CorruptBlock(f"primary index {block.primary} out of range")
    return _bwt.bwt_inverse(block)
