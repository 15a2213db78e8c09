"""Stream-wise differencing of a target file against a homologous reference.

Each semantic stream of the target is turned into a copy/literal patch script
against the same stream of the reference.  Matches are found greedily: a
Bloom filter over reference 16-grams rules out hopeless positions, and the
reference suffix array answers longest-match queries by binary search.

NUC is differenced as symbol codes at the target's packing width, with the
exception stream (EXTRA) differenced separately, so the reconstructed codes
can be re-packed exactly like a reference-free container.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import xxhash
from numba import njit

from . import container as ct
from . import packing
from .errors import CorruptPayload, CorruptScript, ReferenceMismatch, StrandpackError
from .sais import suffix_array
from .streams import STREAM_NAMES, SemanticStreams, factor, reassemble
from .varint import Reader, append_varint, unzigzag, zigzag

MIN_MATCH = 24
QGRAM = 16
BLOOM_BITS_PER_ELEMENT = 10
BLOOM_PROBES = 7

COPY = 0
LITERAL = 1

_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_GOLD = np.uint64(0x9E3779B97F4A7C15)


# ------------------------------------------------------------------- Bloom

@njit(cache=True, nogil=True, inline="always")
def _mix(h):
    h ^= h >> np.uint64(30)
    h *= _MIX1
    h ^= h >> np.uint64(27)
    h *= _MIX2
    h ^= h >> np.uint64(31)
    return h


@njit(cache=True, nogil=True)
def _qgram_hash(s, i):
    h = np.uint64(0)
    for j in range(QGRAM):
        h = (h ^ np.uint64(s[i + j])) * _GOLD
    return h


@njit(cache=True, nogil=True)
def _bloom_probe(bits, m, h, insert):
    h1 = _mix(h)
    h2 = _mix(h ^ _GOLD) | np.uint64(1)
    for k in range(BLOOM_PROBES):
        idx = (h1 + np.uint64(k) * h2) % np.uint64(m)
        word = idx >> np.uint64(6)
        mask = np.uint64(1) << (idx & np.uint64(63))
        if insert:
            bits[word] |= mask
        elif not bits[word] & mask:
            return False
    return True


@njit(cache=True, nogil=True)
def _bloom_build(s, bits, m):
    for i in range(len(s) - QGRAM + 1):
        _bloom_probe(bits, m, _qgram_hash(s, i), True)


@njit(cache=True, nogil=True)
def _bloom_query_all(bits, m, s, out):
    for i in range(len(s) - QGRAM + 1):
        out[i] = _bloom_probe(bits, m, _qgram_hash(s, i), False)


class BloomFilter:
    """Bloom filter over the q-grams of a byte sequence."""

    def __init__(self, seq: np.ndarray):
        count = max(1, len(seq) - QGRAM + 1)
        words = -(-count * BLOOM_BITS_PER_ELEMENT // 64)
        self.m = words * 64
        self.bits = np.zeros(words, dtype=np.uint64)
        if len(seq) >= QGRAM:
            _bloom_build(seq, self.bits, self.m)

    def contains_all(self, seq: np.ndarray) -> np.ndarray:
        """Membership of every q-gram of ``seq`` (one flag per start position)."""
        out = np.zeros(max(0, len(seq) - QGRAM + 1), dtype=np.bool_)
        if len(out):
            _bloom_query_all(self.bits, self.m, seq, out)
        return out

    def __contains__(self, gram: bytes) -> bool:
        arr = np.frombuffer(bytes(gram), dtype=np.uint8)
        if len(arr) != QGRAM:
            raise ValueError(f"q-grams have length {QGRAM}")
        return bool(self.contains_all(arr)[0])


# ------------------------------------------------------------ match search

@njit(cache=True, nogil=True, inline="always")
def _lcp_from(ref, a, tgt, b, start):
    k = start
    nr = len(ref)
    nt = len(tgt)
    while a + k < nr and b + k < nt and ref[a + k] == tgt[b + k]:
        k += 1
    return k


@njit(cache=True, nogil=True)
def _longest_match(ref, sa, tgt, pos):
    """(ref offset, length) of a longest reference match of tgt[pos:]."""
    n = len(sa)
    nt = len(tgt)
    lo = 0
    hi = n
    llcp = 0
    rlcp = 0
    best_len = 0
    best_off = -1
    while lo < hi:
        mid = (lo + hi) >> 1
        s = sa[mid]
        k = _lcp_from(ref, s, tgt, pos, min(llcp, rlcp))
        if k > best_len:
            best_len = k
            best_off = s
        if pos + k == nt:
            # target suffix is a prefix of this reference suffix
            hi = mid
            rlcp = k
        elif s + k == len(ref) or ref[s + k] < tgt[pos + k]:
            lo = mid + 1
            llcp = k
        else:
            hi = mid
            rlcp = k
    for r in (lo - 1, lo):
        if 0 <= r < n:
            s = sa[r]
            k = _lcp_from(ref, s, tgt, pos, 0)
            if k > best_len:
                best_len = k
                best_off = s
    return best_off, best_len


@njit(cache=True, nogil=True)
def _greedy(ref, sa, tgt, passes, use_bloom, kinds, a_col, b_col):
    """Greedy copy/literal parse; returns the descriptor count."""
    nt = len(tgt)
    pos = 0
    nops = 0
    lit_start = -1
    prev_end = 0
    while pos < nt:
        length = 0
        off = 0
        if len(sa) > 0 and nt - pos >= MIN_MATCH:
            if not use_bloom or passes[pos]:
                off, length = _longest_match(ref, sa, tgt, pos)
        if length >= MIN_MATCH:
            if lit_start >= 0:
                kinds[nops] = LITERAL
                a_col[nops] = pos - lit_start
                nops += 1
                lit_start = -1
            kinds[nops] = COPY
            a_col[nops] = off - prev_end
            b_col[nops] = length
            nops += 1
            prev_end = off + length
            pos += length
        else:
            if lit_start < 0:
                lit_start = pos
            pos += 1
    if lit_start >= 0:
        kinds[nops] = LITERAL
        a_col[nops] = nt - lit_start
        nops += 1
    return nops


# ----------------------------------------------------------------- scripts

@dataclass
class PatchScript:
    """Ordered descriptors: ("copy", offset delta, length) or ("literal", length)."""

    ops: list[tuple] = field(default_factory=list)

    @property
    def literal_bytes(self) -> int:
        return sum(op[1] for op in self.ops if op[0] == "literal")

    @property
    def literal_runs(self) -> int:
        return sum(1 for op in self.ops if op[0] == "literal")

    def serialize(self) -> bytes:
        """Column layout: kinds, copy deltas (zigzag), copy lengths, literal lengths."""
        kinds = bytearray()
        deltas = bytearray()
        lengths = bytearray()
        lits = bytearray()
        for op in self.ops:
            if op[0] == "copy":
                kinds.append(COPY)
                append_varint(deltas, zigzag(op[1]))
                append_varint(lengths, op[2])
            else:
                kinds.append(LITERAL)
                append_varint(lits, op[1])
        out = bytearray()
        for col in (kinds, deltas, lengths, lits):
            append_varint(out, len(col))
        append_varint(out, len(self.ops))
        return bytes(out + kinds + deltas + lengths + lits)

    @classmethod
    def parse(cls, buf: bytes) -> PatchScript:
        try:
            rd = Reader(buf)
            sizes = [rd.varint() for _ in range(4)]
            nops = rd.varint()
            cols = [Reader(rd.take(size)) for size in sizes]
            if sizes[0] != nops or rd.remaining():
                raise CorruptScript("script column sizes disagree")
            kinds, deltas, lengths, lits = cols
            ops: list[tuple] = []
            for _ in range(nops):
                kind = kinds.u8()
                if kind == COPY:
                    ops.append(("copy", unzigzag(deltas.varint()), lengths.varint()))
                elif kind == LITERAL:
                    ops.append(("literal", lits.varint()))
                else:
                    raise CorruptScript(f"unknown descriptor kind {kind}")
            if deltas.remaining() or lengths.remaining() or lits.remaining():
                raise CorruptScript("trailing bytes in script columns")
        except CorruptScript:
            raise
        except StrandpackError as exc:
            raise CorruptScript(f"malformed script: {exc}") from exc
        return cls(ops)


class ReferenceIndex:
    """Suffix array and Bloom filter of one reference stream, shared read-only."""

    def __init__(self, reference: bytes | np.ndarray, *, use_bloom: bool = True):
        self.ref = np.frombuffer(bytes(reference), dtype=np.uint8)
        n = len(self.ref)
        if n:
            dtype = np.int32 if n < 2**31 - 1 else np.int64
            self.sa = suffix_array(self.ref, 255, dtype)
        else:
            self.sa = np.zeros(0, dtype=np.int32)
        self.use_bloom = use_bloom
        self.bloom = BloomFilter(self.ref) if use_bloom else None

    def diff(self, target: bytes | np.ndarray) -> tuple[PatchScript, bytes]:
        tgt = np.frombuffer(bytes(target), dtype=np.uint8)
        nt = len(tgt)
        cap = 2 * (nt // MIN_MATCH) + 3
        kinds = np.zeros(cap, dtype=np.uint8)
        a_col = np.zeros(cap, dtype=np.int64)
        b_col = np.zeros(cap, dtype=np.int64)
        if self.use_bloom and nt >= QGRAM:
            passes = self.bloom.contains_all(tgt)
        else:
            passes = np.zeros(1, dtype=np.bool_)
        nops = _greedy(self.ref, self.sa, tgt, passes, self.use_bloom and nt >= QGRAM,
                       kinds, a_col, b_col)
        ops: list[tuple] = []
        literals = []
        pos = 0
        for kind, a, b in zip(kinds[:nops].tolist(), a_col[:nops].tolist(), b_col[:nops].tolist()):
            if kind == COPY:
                ops.append(("copy", a, b))
                pos += b
            else:
                ops.append(("literal", a))
                literals.append(tgt[pos:pos + a].tobytes())
                pos += a
        return PatchScript(ops), b"".join(literals)


def diff_stream(reference: bytes, target: bytes, *, use_bloom: bool = True) -> tuple[PatchScript, bytes]:
    """Greedy patch script turning ``reference`` into ``target``, plus literals."""
    return ReferenceIndex(reference, use_bloom=use_bloom).diff(target)


def apply_patch(reference: bytes, script: PatchScript, literals: bytes) -> bytes:
    reference = bytes(reference)
    out = []
    prev_end = 0
    lit = 0
    for op in script.ops:
        if op[0] == "copy":
            _, delta, length = op
            start = prev_end + delta
            if start < 0 or length < 0 or start + length > len(reference):
                raise CorruptScript(f"COPY [{start}, {start + length}) outside reference of {len(reference)}")
            out.append(reference[start:start + length])
            prev_end = start + length
        elif op[0] == "literal":
            length = op[1]
            if length < 0 or lit + length > len(literals):
                raise CorruptScript("literal stream exhausted")
            out.append(literals[lit:lit + length])
            lit += length
        else:
            raise CorruptScript(f"unknown descriptor {op[0]!r}")
    if lit != len(literals):
        raise CorruptScript(f"{len(literals) - lit} literal bytes left unused")
    return b"".join(out)


def conditional_entropy_bound(p: float, sigma: int) -> float:
    """Bits per symbol of H(T|R) for i.i.d. substitutions at rate ``p``."""
    if not 0.0 <= p <= 1.0 or sigma < 2:
        raise ValueError("need 0 <= p <= 1 and sigma >= 2")
    h2 = 0.0 if p in (0.0, 1.0) else -(p * math.log2(p) + (1 - p) * math.log2(1 - p))
    return h2 + p * math.log2(sigma - 1)


# --------------------------------------------------------------- container

def _stream_views(streams: SemanticStreams, width: int) -> dict[str, bytes]:
    """The six streams as differenced: NUC as codes, EXTRA as exception pairs."""
    views = {name: streams.stream(name) for name in STREAM_NAMES if name not in ("NUC", "EXTRA")}
    if width == ct.NUC_WIDTH_RAW:
        views["NUC"], views["EXTRA"] = streams.nuc, b""
    else:
        codes, extra = packing.to_codes(streams.nuc, width)
        views["NUC"], views["EXTRA"] = codes.tobytes(), extra
    return views


@dataclass
class RefStats:
    """Per-stream patch statistics of the last diff."""

    script_bytes: dict[str, int] = field(default_factory=dict)
    literal_bytes: dict[str, int] = field(default_factory=dict)
    payload_bytes: dict[str, int] = field(default_factory=dict)
    descriptors: dict[str, int] = field(default_factory=dict)


def reference_id(name: str, data: bytes) -> ct.ReferenceId:
    return ct.ReferenceId(name, xxhash.xxh64_intdigest(data))


def diff_container(reference: bytes, target: bytes, config: ct.CodecConfig | None = None, *,
                   reference_name: str = "reference", literal_codec: str | None = None,
                   return_stats: bool = False):
    """Referential container of ``target`` against the ``reference`` file bytes.

    Literals of NUC go through ``literal_codec`` (default: the configured NUC
    codec when it codes bytes, else bwt-cm); other literal streams use lz-ext.
    """
    config = config or ct.CodecConfig()
    config.validate()
    ref_streams = factor(reference)
    tgt_streams = factor(target)
    width = ct.nuc_width("bwt-cm", tgt_streams.nuc)
    ref_views = _stream_views(ref_streams, width)
    tgt_views = _stream_views(tgt_streams, width)
    nuc_lit_codec = literal_codec or (config.nuc if config.nuc in ("raw", "lz-ext", "bwt-cm") else "bwt-cm")

    def work(name: str):
        script, literals = diff_stream(ref_views[name], tgt_views[name])
        return name, script, literals

    with ThreadPoolExecutor(max_workers=max(1, config.threads)) as pool:
        results = list(pool.map(work, STREAM_NAMES)) if config.threads > 1 else [work(n) for n in STREAM_NAMES]

    stats = RefStats()
    entries = []
    for name, script, literals in results:
        script_raw = script.serialize()
        lit_codec = nuc_lit_codec if name == "NUC" else "lz-ext"
        params = bytes([width]) if name == "NUC" else b""
        s_payload = ct.encode_bytes("lz-ext", script_raw)
        l_blocks = ct._split(literals, config.block_size)
        l_payloads = [ct.encode_bytes(lit_codec, b) for b in l_blocks]
        entries.append((ct.StreamEntry(name, ct.ROLE_SCRIPT, "lz-ext", params), [(s_payload, script_raw)]))
        entries.append((ct.StreamEntry(name, ct.ROLE_LITERALS, lit_codec), list(zip(l_payloads, l_blocks))))
        stats.script_bytes[name] = len(s_payload)
        stats.literal_bytes[name] = len(literals)
        stats.payload_bytes[name] = len(s_payload) + sum(len(p) for p in l_payloads)
        stats.descriptors[name] = len(script.ops)
    blob = ct.write_container(entries, len(target), ct._record_table(tgt_streams),
                              reference=reference_id(reference_name, reference))
    return (blob, stats) if return_stats else blob


def reconstruct(reference: bytes, blob: bytes, *, threads: int = 1) -> bytes:
    """Rebuild the target file from a referential container and its reference."""
    rd = ct.ContainerReader(blob)
    if rd.reference is None:
        raise CorruptPayload("not a referential container")
    if xxhash.xxh64_intdigest(reference) != rd.reference.content_hash:
        raise ReferenceMismatch(
            f"reference content hash differs from the one recorded for {rd.reference.name!r}")
    nuc_entry = rd.entry("NUC", ct.ROLE_SCRIPT)
    width = nuc_entry.params[0]
    ref_views = _stream_views(factor(reference), width)

    def rebuild(name: str) -> bytes:
        script = PatchScript.parse(rd.stream(name, ct.ROLE_SCRIPT))
        literals = rd.stream(name, ct.ROLE_LITERALS)
        return apply_patch(ref_views[name], script, literals)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            views = dict(zip(STREAM_NAMES, pool.map(rebuild, STREAM_NAMES)))
    else:
        views = {name: rebuild(name) for name in STREAM_NAMES}
    if width == ct.NUC_WIDTH_RAW:
        nuc = views["NUC"]
    else:
        codes = np.frombuffer(views["NUC"], dtype=np.uint8)
        if len(codes) and int(codes.max()) >= (1 << width):
            raise CorruptScript("patched NUC holds codes outside the packing alphabet")
        nuc = packing.from_codes(codes, width, views["EXTRA"])
    out = reassemble(SemanticStreams(views["CTRL"], views["HDR"], nuc, views["CASE"], views["QUALITY"]))
    if len(out) != rd.original_size:
        raise CorruptPayload("reconstructed size disagrees with header")
    return out
