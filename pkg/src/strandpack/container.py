"""Indexed block container (magic ``HKT1``).

Layout (integers little-endian, sizes inside the index as LEB128 varints)::

    header      "HKT1" u8 version u8 flags u8 checksum-alg u64 original-size
                [reference section: varint name-len, name, u64 content hash]  (flag bit 0)
                varint stream count
                per stream: u8 stream id, u8 role, u8 codec id, varint param-len, params
    payloads    compressed blocks, stream by stream, block by block
    footer      per stream: varint block count,
                    per block: varint offset, varint compressed size, varint raw size, u64 checksum
                varint record count, per record: varint sequence length, varint case length
    trailer     u64 footer offset, u64 footer checksum, "HKT1"

NUC blocks hold ``block_size`` symbols.  The EXTRA stream has exactly one
block per NUC block carrying that block's exception pairs, so a NUC block
decodes from its own payload plus the matching EXTRA block.  Checksums are
xxh64 over the raw (decoded) block bytes.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import xxhash

from . import bwtcm, coders, markov, packing
from .errors import (ChecksumMismatch, CorruptPayload, RangeOutOfBounds, StrandpackError,
                     TruncatedContainer, UnknownCodec)
from .streams import (STREAM_NAMES, SemanticStreams, apply_case, case_mask_for_record, factor,
                      parse_ctrl, reassemble)
from .varint import Reader, append_varint, encode_varint

MAGIC = b"HKT1"
VERSION = 1
CHECKSUM_XXH64 = 1
TRAILER_SIZE = 8 + 8 + len(MAGIC)
DEFAULT_BLOCK_SIZE = 16 << 20

FLAG_REFERENTIAL = 0x01

STREAM_IDS = {name: i for i, name in enumerate(STREAM_NAMES)}
CODEC_IDS = {"raw": 0, "lz-ext": 1, "bwt-cm": 2, "markov-mix": 3, "quality-o1": 4}
CODEC_NAMES = {v: k for k, v in CODEC_IDS.items()}

ROLE_DATA = 0
ROLE_SCRIPT = 1
ROLE_LITERALS = 2

NUC_WIDTH_RAW = 8


def checksum(data: bytes) -> int:
    return xxhash.xxh64_intdigest(data)


@dataclass
class CodecConfig:
    """Per-stream codec assignment plus block policy."""

    nuc: str = "bwt-cm"
    ctrl: str = "lz-ext"
    hdr: str = "lz-ext"
    case: str = "raw"
    quality: str = "quality-o1"
    extra: str = "raw"
    profile: str = "lite"
    block_size: int = DEFAULT_BLOCK_SIZE
    threads: int = 1

    def codec_for(self, stream: str) -> str:
        return {"CTRL": self.ctrl, "HDR": self.hdr, "NUC": self.nuc, "CASE": self.case,
                "QUALITY": self.quality, "EXTRA": self.extra}[stream]

    def validate(self) -> None:
        for name in STREAM_NAMES:
            codec = self.codec_for(name)
            if codec not in CODEC_IDS:
                raise UnknownCodec(f"unknown codec {codec!r} for {name}")
            if codec == "markov-mix" and name != "NUC":
                raise UnknownCodec(f"markov-mix only codes NUC, not {name}")
        if self.profile not in markov.PROFILES:
            raise UnknownCodec(f"unknown markov-mix profile {self.profile!r}")
        if self.block_size <= 0 or self.block_size % 4:
            raise ValueError("block size must be a positive multiple of 4")


# ------------------------------------------------------------- byte codecs

def encode_bytes(codec: str, data: bytes) -> bytes:
    if codec == "raw":
        return bytes(data)
    if codec == "lz-ext":
        return coders.lz_encode(data)
    if codec == "bwt-cm":
        return bwtcm.compress(data)
    if codec == "quality-o1":
        return coders.quality_encode(data)
    raise UnknownCodec(f"codec {codec!r} cannot code byte streams")


def decode_bytes(codec: str, payload: bytes, raw_size: int) -> bytes:
    if codec == "raw":
        return bytes(payload)
    if codec == "lz-ext":
        return coders.lz_decode(payload)
    if codec == "bwt-cm":
        return bwtcm.decompress(payload, expected_n=raw_size)
    if codec == "quality-o1":
        return coders.quality_decode(payload, expected_n=raw_size)
    raise UnknownCodec(f"codec {codec!r} cannot code byte streams")


def nuc_width(codec: str, nuc: bytes) -> int:
    width = packing.choose_width(nuc)
    if width is packing.NO_PACK:
        return 4 if codec == "markov-mix" else NUC_WIDTH_RAW
    return width


def encode_nuc_block(codec: str, nuc: bytes, width: int, profile: str) -> tuple[bytes, bytes]:
    """Returns (payload, extra) for one block of uppercase symbols."""
    if width == NUC_WIDTH_RAW:
        return encode_bytes(codec, nuc), b""
    codes, extra = packing.to_codes(nuc, width)
    if codec == "markov-mix":
        payload, _ = markov.encode(codes, width, profile)
    elif codec in ("bwt-cm",):
        payload = bwtcm.compress(codes.tobytes())
    elif codec in ("raw", "lz-ext"):
        payload = encode_bytes(codec, packing.pack_codes(codes, width))
    else:
        raise UnknownCodec(f"codec {codec!r} cannot code NUC")
    return payload, extra


def decode_nuc_block(codec: str, payload: bytes, n: int, width: int, extra: bytes) -> bytes:
    if width == NUC_WIDTH_RAW:
        return decode_bytes(codec, payload, n)
    if codec == "markov-mix":
        codes, w = markov.decode(payload, expected_n=n)
        if w != width or len(codes) != n:
            raise CorruptPayload("markov-mix block header disagrees with the index")
    elif codec == "bwt-cm":
        codes = np.frombuffer(bwtcm.decompress(payload, expected_n=n), dtype=np.uint8)
    elif codec in ("raw", "lz-ext"):
        packed = decode_bytes(codec, payload, -(-n * width // 8))
        codes = packing.unpack_codes(packed, n, width)
    else:
        raise UnknownCodec(f"codec {codec!r} cannot code NUC")
    if len(codes) and int(codes.max()) >= (1 << width):
        raise CorruptPayload("symbol code outside packing alphabet")
    return packing.from_codes(np.asarray(codes, dtype=np.uint8), width, extra)


# -------------------------------------------------------------- structures

@dataclass
class BlockEntry:
    offset: int
    size: int
    raw_size: int
    checksum: int


@dataclass
class StreamEntry:
    stream: str
    role: int
    codec: str
    params: bytes = b""
    blocks: list[BlockEntry] = field(default_factory=list)


@dataclass
class ReferenceId:
    name: str
    content_hash: int


def _map(fn, items, threads: int):
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _split(data: bytes, size: int) -> list[bytes]:
    if not data:
        return []
    return [data[i:i + size] for i in range(0, len(data), size)]


def _nuc_threads(codec: str, profile: str, threads: int) -> int:
    # a full-profile bank is ~2.4 GB; more than one in flight does not fit typical hosts
    return 1 if codec == "markov-mix" and profile == "full" else threads


def _nuc_params(width: int, profile: str) -> bytes:
    return bytes([width, markov.PROFILES[profile][0]])


def write_container(entries: list[tuple[StreamEntry, list[tuple[bytes, bytes]]]],
                    original_size: int, records: list[tuple[int, int]],
                    reference: ReferenceId | None = None) -> bytes:
    """Serialize streams whose blocks are given as (payload, raw bytes) pairs."""
    head = bytearray(MAGIC)
    head += bytes([VERSION, FLAG_REFERENTIAL if reference else 0, CHECKSUM_XXH64])
    head += original_size.to_bytes(8, "little")
    if reference:
        name = reference.name.encode()
        append_varint(head, len(name))
        head += name
        head += reference.content_hash.to_bytes(8, "little")
    append_varint(head, len(entries))
    for entry, _ in entries:
        head += bytes([STREAM_IDS[entry.stream], entry.role, CODEC_IDS[entry.codec]])
        append_varint(head, len(entry.params))
        head += entry.params

    out = bytearray(head)
    for entry, blocks in entries:
        entry.blocks = []
        for payload, raw in blocks:
            entry.blocks.append(BlockEntry(len(out), len(payload), len(raw), checksum(raw)))
            out += payload

    footer = bytearray()
    for entry, _ in entries:
        append_varint(footer, len(entry.blocks))
        for b in entry.blocks:
            append_varint(footer, b.offset)
            append_varint(footer, b.size)
            append_varint(footer, b.raw_size)
            footer += b.checksum.to_bytes(8, "little")
    append_varint(footer, len(records))
    for seq_len, case_len in records:
        append_varint(footer, seq_len)
        append_varint(footer, case_len)

    footer_offset = len(out)
    out += footer
    out += footer_offset.to_bytes(8, "little")
    out += checksum(bytes(footer)).to_bytes(8, "little")
    out += MAGIC
    return bytes(out)


def _record_table(streams: SemanticStreams) -> list[tuple[int, int]]:
    recs = streams.records
    out = []
    for i, rec in enumerate(recs):
        end = recs[i + 1].case_offset if i + 1 < len(recs) else len(streams.case_rl)
        out.append((rec.seq_len, end - rec.case_offset))
    return out


def compress_streams(streams: SemanticStreams, config: CodecConfig, original_size: int) -> bytes:
    config.validate()
    threads = config.threads
    entries: list[tuple[StreamEntry, list[tuple[bytes, bytes]]]] = []

    nuc_codec = config.nuc
    width = nuc_width(nuc_codec, streams.nuc)
    nuc_blocks = _split(streams.nuc, config.block_size)
    coded = _map(lambda blk: encode_nuc_block(nuc_codec, blk, width, config.profile), nuc_blocks,
                 _nuc_threads(nuc_codec, config.profile, threads))

    for name in STREAM_NAMES:
        codec = config.codec_for(name)
        if name == "NUC":
            entry = StreamEntry(name, ROLE_DATA, codec, _nuc_params(width, config.profile))
            entries.append((entry, [(payload, raw) for (payload, _), raw in zip(coded, nuc_blocks)]))
        elif name == "EXTRA":
            extras = [extra for _, extra in coded]
            payloads = _map(lambda e: encode_bytes(codec, e), extras, threads)
            entries.append((StreamEntry(name, ROLE_DATA, codec), list(zip(payloads, extras))))
        else:
            raw_blocks = _split(streams.stream(name), config.block_size)
            payloads = _map(lambda b: encode_bytes(codec, b), raw_blocks, threads)
            entries.append((StreamEntry(name, ROLE_DATA, codec), list(zip(payloads, raw_blocks))))
    return write_container(entries, original_size, _record_table(streams))


def compress_file(data: bytes, config: CodecConfig | None = None) -> bytes:
    """Factor, pack and block-code a FASTA/FASTQ byte string."""
    config = config or CodecConfig()
    return compress_streams(factor(data), config, len(data))


def decompress_file(blob: bytes, *, threads: int = 1) -> bytes:
    return ContainerReader(blob).decompress(threads=threads)


class ContainerReader:
    """Parsed container with per-block decode and random-access slicing."""

    def __init__(self, blob: bytes):
        self.blob = bytes(blob)
        self.decode_counts: dict[str, int] = {}
        self._parse()

    # -- parsing

    def _parse(self) -> None:
        blob = self.blob
        if len(blob) < 4 + 3 + 8 + TRAILER_SIZE:
            raise TruncatedContainer("file shorter than header plus trailer")
        if blob[:4] != MAGIC:
            raise TruncatedContainer("missing HKT1 magic at start")
        if blob[-4:] != MAGIC:
            raise TruncatedContainer("missing HKT1 trailer (file truncated?)")
        footer_offset = int.from_bytes(blob[-TRAILER_SIZE:-TRAILER_SIZE + 8], "little")
        footer_sum = int.from_bytes(blob[-12:-4], "little")
        footer_end = len(blob) - TRAILER_SIZE
        if not 0 < footer_offset <= footer_end:
            raise TruncatedContainer("footer offset outside file")
        footer = blob[footer_offset:footer_end]
        if checksum(footer) != footer_sum:
            raise ChecksumMismatch("INDEX", 0)

        rd = Reader(blob, 4, footer_offset)
        version = rd.u8()
        if version != VERSION:
            raise CorruptPayload(f"unsupported container version {version}")
        self.flags = rd.u8()
        alg = rd.u8()
        if alg != CHECKSUM_XXH64:
            raise CorruptPayload(f"unknown checksum algorithm {alg}")
        self.original_size = rd.u64()
        self.reference = None
        if self.flags & FLAG_REFERENTIAL:
            name = rd.take(rd.varint()).decode()
            self.reference = ReferenceId(name, rd.u64())
        self.entries: list[StreamEntry] = []
        for _ in range(rd.varint()):
            sid, role, cid = rd.take(3)
            if sid >= len(STREAM_NAMES):
                raise CorruptPayload(f"unknown stream id {sid}")
            if cid not in CODEC_NAMES:
                raise UnknownCodec(f"unknown codec id {cid}")
            params = rd.take(rd.varint())
            self.entries.append(StreamEntry(STREAM_NAMES[sid], role, CODEC_NAMES[cid], params))

        fr = Reader(footer)
        for entry in self.entries:
            for _ in range(fr.varint()):
                b = BlockEntry(fr.varint(), fr.varint(), fr.varint(), fr.u64())
                if b.offset + b.size > footer_offset:
                    raise TruncatedContainer("block payload extends past the index")
                entry.blocks.append(b)
        self.records: list[tuple[int, int, int, int]] = []  # nuc off, len, case off, case len
        nuc_off = case_off = 0
        for _ in range(fr.varint()):
            seq_len, case_len = fr.varint(), fr.varint()
            self.records.append((nuc_off, seq_len, case_off, case_len))
            nuc_off += seq_len
            case_off += case_len

    def entry(self, stream: str, role: int = ROLE_DATA) -> StreamEntry:
        for e in self.entries:
            if e.stream == stream and e.role == role:
                return e
        raise CorruptPayload(f"container has no {stream} stream (role {role})")

    # -- block decode

    def _decode(self, entry: StreamEntry, i: int, extra: bytes | None = None) -> bytes:
        b = entry.blocks[i]
        payload = self.blob[b.offset:b.offset + b.size]
        self.decode_counts[entry.stream] = self.decode_counts.get(entry.stream, 0) + 1
        try:
            if entry.stream == "NUC" and entry.role == ROLE_DATA:
                width = entry.params[0]
                raw = decode_nuc_block(entry.codec, payload, b.raw_size, width, extra or b"")
            else:
                raw = decode_bytes(entry.codec, payload, b.raw_size)
        except UnknownCodec:
            raise
        except (StrandpackError, ValueError, IndexError, MemoryError, OverflowError) as exc:
            raise ChecksumMismatch(entry.stream, i) from exc
        if len(raw) != b.raw_size or checksum(raw) != b.checksum:
            raise ChecksumMismatch(entry.stream, i)
        return raw

    def block(self, stream: str, i: int, role: int = ROLE_DATA) -> bytes:
        entry = self.entry(stream, role)
        if stream == "NUC" and role == ROLE_DATA:
            return self._decode(entry, i, self.block("EXTRA", i))
        return self._decode(entry, i)

    def stream(self, stream: str, role: int = ROLE_DATA, threads: int = 1) -> bytes:
        entry = self.entry(stream, role)
        idx = list(range(len(entry.blocks)))
        if stream == "NUC" and entry.codec == "markov-mix" and len(entry.params) > 1:
            profile = markov.PROFILE_BY_ID.get(entry.params[1], ("lite",))[0]
            threads = _nuc_threads(entry.codec, profile, threads)
        return b"".join(_map(lambda i: self.block(stream, i, role), idx, threads))

    def streams(self, threads: int = 1) -> SemanticStreams:
        get = lambda name: self.stream(name, threads=threads)  # noqa: E731
        return SemanticStreams(get("CTRL"), get("HDR"), get("NUC"), get("CASE"), get("QUALITY"))

    def decompress(self, threads: int = 1) -> bytes:
        if self.reference is not None:
            raise CorruptPayload("referential container: use referential.reconstruct")
        out = reassemble(self.streams(threads))
        if len(out) != self.original_size:
            raise CorruptPayload("reassembled size disagrees with header")
        return out

    # -- random access

    def _range(self, stream: str, lo: int, hi: int) -> bytes:
        """Bytes [lo, hi) of a stream, decoding only overlapping blocks."""
        entry = self.entry(stream)
        parts = []
        start = 0
        for i, b in enumerate(entry.blocks):
            end = start + b.raw_size
            if end > lo and start < hi:
                raw = self.block(stream, i)
                parts.append(raw[max(lo, start) - start:min(hi, end) - start])
            start = end
            if start >= hi:
                break
        return b"".join(parts)

    def slice(self, record: int, start: int, end: int) -> bytes:
        """Symbols ``[start, end)`` of a record with original case restored."""
        if not 0 <= record < len(self.records):
            raise RangeOutOfBounds(f"record {record} of {len(self.records)}")
        nuc_off, length, case_off, case_len = self.records[record]
        if not 0 <= start <= end <= length:
            raise RangeOutOfBounds(f"range {start}..{end} outside record of length {length}")
        if start == end:
            return b""
        seq = self._range("NUC", nuc_off + start, nuc_off + end)
        case = self._range("CASE", case_off, case_off + case_len)
        mask, _ = case_mask_for_record(case, 0, length)
        return apply_case(seq, mask[start:end])

    def describe(self) -> dict:
        return {
            "original_size": self.original_size,
            "referential": self.reference is not None,
            "records": len(self.records),
            "streams": [
                {"stream": e.stream, "role": e.role, "codec": e.codec,
                 "params": e.params.hex(),
                 "blocks": [(b.offset, b.size, b.raw_size, f"{b.checksum:016x}") for b in e.blocks]}
                for e in self.entries
            ],
        }


def record_count(ctrl: bytes) -> int:
    return len(parse_ctrl(ctrl)[1])


__all__ = [
    "CodecConfig", "ContainerReader", "compress_file", "decompress_file", "compress_streams",
    "write_container", "StreamEntry", "ReferenceId", "encode_varint",
]
