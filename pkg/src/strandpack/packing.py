"""2-bit / 4-bit nucleotide packing with an exact exception side channel.

Codes are packed MSB-first.  Any byte outside the width's alphabet is
replaced by code 0 in the payload and recorded in ``extra`` as a
(varint position delta, raw byte) pair; the first delta is taken from 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CorruptExtra
from .varint import Reader, append_varint

ALPHABET_2 = b"ACGT"
ALPHABET_4 = b"ACGTNRYSWKMBDHVU"
PLACEHOLDER = 0
NO_PACK = None

_INVALID = 255


def _lut(alphabet: bytes) -> np.ndarray:
    lut = np.full(256, _INVALID, dtype=np.uint8)
    for code, sym in enumerate(alphabet):
        lut[sym] = code
    return lut


_ENC = {2: _lut(ALPHABET_2), 4: _lut(ALPHABET_4)}
_DEC = {2: np.frombuffer(ALPHABET_2, dtype=np.uint8), 4: np.frombuffer(ALPHABET_4, dtype=np.uint8)}


@dataclass
class PackedNuc:
    width_bits: int
    payload: bytes
    n_symbols: int
    extra: bytes = b""


def threshold(width_bits: int) -> float:
    """Largest exception fraction for which packing still shrinks the stream."""
    return (8 - width_bits) / 40


def to_codes(nuc, width_bits: int) -> tuple[np.ndarray, bytes]:
    """Map symbols to codes; returns (codes, serialized extra)."""
    arr = np.frombuffer(bytes(nuc), dtype=np.uint8) if not isinstance(nuc, np.ndarray) else nuc
    codes = _ENC[width_bits][arr]
    bad = np.flatnonzero(codes == _INVALID)
    extra = bytearray()
    if bad.size:
        codes[bad] = PLACEHOLDER
        prev = 0
        raw = arr[bad].tolist()
        for pos, byte in zip(bad.tolist(), raw):
            append_varint(extra, pos - prev)
            extra.append(byte)
            prev = pos
    return codes, bytes(extra)


def parse_extra(extra: bytes, n_symbols: int) -> tuple[np.ndarray, np.ndarray]:
    rd = Reader(extra)
    positions: list[int] = []
    values: list[int] = []
    pos = 0
    first = True
    try:
        while rd.remaining():
            delta = rd.varint()
            if not first and delta == 0:
                raise CorruptExtra("extra positions must strictly increase")
            pos += delta
            first = False
            if pos >= n_symbols:
                raise CorruptExtra(f"extra position {pos} beyond {n_symbols} symbols")
            positions.append(pos)
            values.append(rd.u8())
    except CorruptExtra:
        raise
    except Exception as exc:
        raise CorruptExtra(f"truncated extra channel: {exc}") from exc
    return np.asarray(positions, dtype=np.int64), np.asarray(values, dtype=np.uint8)


def from_codes(codes: np.ndarray, width_bits: int, extra: bytes) -> bytes:
    out = _DEC[width_bits][codes]
    if extra:
        pos, val = parse_extra(extra, len(codes))
        out[pos] = val
    return out.tobytes()


def pack_codes(codes: np.ndarray, width_bits: int) -> bytes:
    per = 8 // width_bits
    n = len(codes)
    pad = (-n) % per
    if pad:
        codes = np.concatenate([codes, np.zeros(pad, dtype=np.uint8)])
    grid = codes.reshape(-1, per).astype(np.uint8)
    out = np.zeros(grid.shape[0], dtype=np.uint8)
    for k in range(per):
        out |= grid[:, k] << np.uint8(8 - width_bits * (k + 1))
    return out.tobytes()


def unpack_codes(payload: bytes, n_symbols: int, width_bits: int) -> np.ndarray:
    per = 8 // width_bits
    need = -(-n_symbols * width_bits // 8)
    if len(payload) < need:
        raise CorruptExtra(f"payload holds {len(payload)} bytes, need {need}")
    arr = np.frombuffer(payload, dtype=np.uint8, count=need)
    mask = np.uint8((1 << width_bits) - 1)
    grid = np.empty((need, per), dtype=np.uint8)
    for k in range(per):
        grid[:, k] = (arr >> np.uint8(8 - width_bits * (k + 1))) & mask
    return grid.reshape(-1)[:n_symbols]


def pack(nuc, width_bits: int) -> PackedNuc:
    if width_bits not in (2, 4):
        raise ValueError(f"width must be 2 or 4, got {width_bits}")
    codes, extra = to_codes(nuc, width_bits)
    return PackedNuc(width_bits, pack_codes(codes, width_bits), len(codes), extra)


def unpack(p: PackedNuc) -> bytes:
    codes = unpack_codes(p.payload, p.n_symbols, p.width_bits)
    return from_codes(codes, p.width_bits, p.extra)


def exception_counts(nuc) -> tuple[int, int]:
    """Number of symbols outside the 2-bit and 4-bit alphabets."""
    arr = np.frombuffer(bytes(nuc), dtype=np.uint8)
    return (int(np.count_nonzero(_ENC[2][arr] == _INVALID)),
            int(np.count_nonzero(_ENC[4][arr] == _INVALID)))


def choose_width(nuc) -> int | None:
    """2 or 4 when packing at that width pays off, else None (no packing)."""
    n = len(nuc)
    if n == 0:
        return 2
    e2, e4 = exception_counts(nuc)
    # integer form of e/n < (8 - k) / 40
    if 40 * e2 < 6 * n:
        return 2
    if 40 * e4 < 4 * n:
        return 4
    return NO_PACK
