"""Rotation BWT without a sentinel, with anchor-table (auxiliary index) inversion.

Metadata layout, little-endian, exactly ``meta_bits(n, w, aux)`` bits:

    u8   version (high nibble) | flags (bit0: 64-bit SA words, bit1: anchors present)
    u16  stride exponent (anchor form) or primary index (small-block form)
    u64  block length n
    256 x uW  anchor rows (anchor form only; unused entries are zero)
    ceil(n / 2**24) x u64  compressed chunk sizes
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import BlockTooLarge, CorruptBlock, TruncatedContainer
from .sais import suffix_array

AUX_MIN_BLOCK = 32 * 1024
AUX_ENTRIES = 256
CHUNK_SIZE = 1 << 24
MAX_BLOCK = 1 << 40
META_VERSION = 1

FLAG_SA64 = 0x01
FLAG_AUX = 0x02


@dataclass
class BwtBlock:
    l: bytes
    n: int
    sa_width: int
    primary: int
    aux: np.ndarray | None
    stride: int

    @property
    def anchor_count(self) -> int:
        return -(-self.n // self.stride) if self.aux is not None else 0


def sa_width_for(n: int) -> int:
    return 32 if n < 2**31 else 64


def stride_for(n: int) -> int:
    return 1 << int(math.floor(math.log2(max(1, n // 8))))


def meta_bits(n: int, w: int, aux: bool = True) -> int:
    """Bit length of the block metadata (the 256-word table only with ``aux``)."""
    chunks = max(1, -(-n // CHUNK_SIZE))
    return 8 + 16 + (AUX_ENTRIES * w if aux else 0) + 64 + 64 * chunks


@njit(cache=True, nogil=True)
def _min_period(t):
    n = len(t)
    pi = np.zeros(n, dtype=np.int64)
    for i in range(1, n):
        k = pi[i - 1]
        while k > 0 and t[i] != t[k]:
            k = pi[k - 1]
        if t[i] == t[k]:
            k += 1
        pi[i] = k
    p = n - pi[n - 1]
    if n % p == 0:
        return p
    return n


@njit(cache=True, nogil=True)
def _rotation_rows(sa, t, n, stride, want_aux, aux, l):
    """Fill L and anchor rows from the suffix array of T+T; returns row of rotation 0."""
    row = 0
    primary = -1
    for k in range(len(sa)):
        v = sa[k]
        if v >= n:
            continue
        l[row] = t[v - 1] if v > 0 else t[n - 1]
        if v == 0:
            primary = row
        if want_aux and v % stride == 0:
            aux[v // stride] = row
        row += 1
    return primary


def bwt_forward(block, *, sa_width: int | None = None) -> BwtBlock:
    """BWT of ``block`` as the last column of its sorted rotations.

    ``primary`` is the first row whose rotation equals the input, matching a
    stable sort of rotations.
    """
    t = np.frombuffer(bytes(block), dtype=np.uint8)
    n = len(t)
    if n < 1:
        raise ValueError("block must be non-empty")
    if n > MAX_BLOCK:
        raise BlockTooLarge(f"block of {n} bytes exceeds {MAX_BLOCK}")
    w = sa_width or sa_width_for(n)
    stride = stride_for(n)
    want_aux = n >= AUX_MIN_BLOCK
    tt = np.concatenate([t, t])
    sa = suffix_array(tt, 255, np.int32 if 2 * n < 2**31 - 1 else np.int64)
    l = np.empty(n, dtype=np.uint8)
    aux = np.zeros(AUX_ENTRIES, dtype=np.uint64)
    row0 = _rotation_rows(sa, t, n, stride, want_aux, aux, l)
    del sa, tt
    # equal rotations sort by decreasing start in T+T; move to the first of the group
    period = _min_period(t)
    primary = row0 - (n // period - 1)
    if want_aux:
        aux[0] = primary
    return BwtBlock(l.tobytes(), n, w, int(primary), aux if want_aux else None, stride)


@njit(cache=True, nogil=True)
def _lf_table(l):
    n = len(l)
    counts = np.zeros(256, dtype=np.int64)
    for i in range(n):
        counts[l[i]] += 1
    c = np.zeros(256, dtype=np.int64)
    acc = 0
    for a in range(256):
        c[a] = acc
        acc += counts[a]
    lf = np.empty(n, dtype=np.int64)
    for i in range(n):
        a = l[i]
        lf[i] = c[a]
        c[a] += 1
    return lf


@njit(cache=True, nogil=True)
def _invert_primary(l, lf, primary, out):
    n = len(l)
    row = primary
    for k in range(n - 1, -1, -1):
        out[k] = l[row]
        row = lf[row]


@njit(cache=True, nogil=True)
def _invert_segment(l, lf, start_row, lo, hi, out, visited):
    row = start_row
    for k in range(hi - 1, lo - 1, -1):
        if row < 0 or row >= len(l) or visited[row]:
            return False
        visited[row] = True
        out[k] = l[row]
        row = lf[row]
    return True


def bwt_inverse(b: BwtBlock, *, use_aux: bool | None = None) -> bytes:
    """Invert a BWT block, per stride segment from anchors when present."""
    l = np.frombuffer(b.l, dtype=np.uint8)
    n = b.n
    if len(l) != n:
        raise CorruptBlock(f"L has {len(l)} bytes, block declares {n}")
    if not 0 <= b.primary < n:
        raise CorruptBlock(f"primary index {b.primary} out of range")
    if use_aux is None:
        use_aux = b.aux is not None
    lf = _lf_table(l)
    out = np.empty(n, dtype=np.uint8)
    if not use_aux:
        _invert_primary(l, lf, b.primary, out)
        return out.tobytes()
    if b.aux is None:
        raise CorruptBlock("anchor inversion requested on a block without anchors")
    r = b.stride
    m = -(-n // r)
    visited = np.zeros(n, dtype=np.bool_)
    for seg in range(m):
        lo = seg * r
        hi = min(n, lo + r)
        start = int(b.aux[seg + 1]) if seg + 1 < m else int(b.aux[0])
        if not _invert_segment(l, lf, start, lo, hi, out, visited):
            # LF splits into cycles of the period on periodic text, so a revisit
            # is legitimate there; anywhere else the anchors are corrupt
            _invert_primary(l, lf, b.primary, out)
            if _min_period(out) < n:
                return out.tobytes()
            raise CorruptBlock(f"anchor walk for segment {seg} revisits rows")
    return out.tobytes()


def serialize_meta(b: BwtBlock, chunk_sizes: list[int], *, sa_width: int | None = None) -> bytes:
    w = sa_width or b.sa_width
    has_aux = b.aux is not None
    flags = (FLAG_SA64 if w == 64 else 0) | (FLAG_AUX if has_aux else 0)
    out = bytearray([(META_VERSION << 4) | flags])
    if has_aux:
        out += (int(b.stride).bit_length() - 1).to_bytes(2, "little")
    else:
        out += int(b.primary).to_bytes(2, "little")
    out += int(b.n).to_bytes(8, "little")
    if has_aux:
        word = np.dtype("<u4") if w == 32 else np.dtype("<u8")
        out += b.aux.astype(word).tobytes()
    for size in chunk_sizes:
        out += int(size).to_bytes(8, "little")
    return bytes(out)


def parse_meta(buf, pos: int = 0):
    """Returns (header dict, new position); the header omits the L column."""
    def need(k):
        if pos + k > len(buf):
            raise TruncatedContainer("BWT metadata truncated")
    need(11)
    head = buf[pos]
    version, flags = head >> 4, head & 0x0F
    if version != META_VERSION:
        raise CorruptBlock(f"unsupported BWT metadata version {version}")
    field16 = int.from_bytes(buf[pos + 1:pos + 3], "little")
    n = int.from_bytes(buf[pos + 3:pos + 11], "little")
    pos += 11
    w = 64 if flags & FLAG_SA64 else 32
    aux = None
    if flags & FLAG_AUX:
        size = AUX_ENTRIES * w // 8
        need(size)
        aux = np.frombuffer(bytes(buf[pos:pos + size]), dtype="<u4" if w == 32 else "<u8").astype(np.uint64)
        pos += size
        stride = 1 << field16
        primary = int(aux[0])
    else:
        stride = stride_for(n)
        primary = field16
    chunks = max(1, -(-n // CHUNK_SIZE))
    need(8 * chunks)
    sizes = [int.from_bytes(buf[pos + 8 * i:pos + 8 * i + 8], "little") for i in range(chunks)]
    pos += 8 * chunks
    return {"n": n, "sa_width": w, "aux": aux, "stride": stride, "primary": primary,
            "chunk_sizes": sizes}, pos
