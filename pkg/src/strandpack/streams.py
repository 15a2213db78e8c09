"""FASTA/FASTQ factorization into semantic streams and exact reassembly.

CTRL layout (version-specific, little-endian varints):

    [u8 file flags]                  bit 0: input lacks a trailing newline
    per record:
        [u8 format tag]              0 = FASTA, 1 = FASTQ
        [varint header length]
        [varint sequence length]
        [varint line-run count]      run-length coded sequence line widths
        [varint width, varint repeat] * line-run count
        [u8 quality flag]            0 none, 1 '+', 2 '+header', 3 '+<custom>'

A custom separator line (flag 3) stores its text after the header line in HDR.
CASE holds, per record, one initial-case byte (1 = lowercase) followed by the
alternating run lengths as varints, summing to the record's sequence length.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InconsistentStreams, MalformedRecord, NonCanonicalLineEnding, UnknownFormat
from .varint import Reader, append_varint

FASTA = 0
FASTQ = 1

QUAL_NONE = 0
QUAL_PLUS = 1
QUAL_PLUS_HEADER = 2
QUAL_PLUS_CUSTOM = 3

FLAG_NO_FINAL_NEWLINE = 0x01

STREAM_NAMES = ("CTRL", "HDR", "NUC", "CASE", "QUALITY", "EXTRA")

_IUPAC = frozenset(b"ACGTNRYSWKMBDHVU")


@dataclass
class Record:
    """Framing of one record as decoded from CTRL."""

    fmt: int
    header_len: int
    seq_len: int
    line_runs: list[tuple[int, int]]
    qual_flag: int
    nuc_offset: int = 0
    case_offset: int = 0
    qual_offset: int = 0


@dataclass
class SemanticStreams:
    ctrl: bytes = b""
    hdr: bytes = b""
    nuc: bytes = b""
    case_rl: bytes = b""
    quality: bytes = b""
    records: list[Record] = field(default_factory=list, repr=False, compare=False)

    @property
    def extra_raw(self) -> list[tuple[int, int]]:
        """Positions and bytes of NUC symbols outside the IUPAC alphabet."""
        arr = np.frombuffer(self.nuc, dtype=np.uint8)
        mask = ~_IUPAC_LUT[arr]
        pos = np.flatnonzero(mask)
        return [(int(p), int(arr[p])) for p in pos]

    def stream(self, name: str) -> bytes:
        return {
            "CTRL": self.ctrl,
            "HDR": self.hdr,
            "NUC": self.nuc,
            "CASE": self.case_rl,
            "QUALITY": self.quality,
        }[name]


_IUPAC_LUT = np.zeros(256, dtype=bool)
_IUPAC_LUT[list(_IUPAC)] = True


def _line_runs(lengths: list[int]) -> list[tuple[int, int]]:
    runs: list[tuple[int, int]] = []
    for width in lengths:
        if runs and runs[-1][0] == width:
            runs[-1] = (width, runs[-1][1] + 1)
        else:
            runs.append((width, 1))
    return runs


def _case_runs(is_lower: np.ndarray, start: int, end: int, out: bytearray) -> None:
    if start == end:
        out.append(0)
        return
    seg = is_lower[start:end]
    out.append(1 if seg[0] else 0)
    change = np.flatnonzero(seg[1:] != seg[:-1]) + 1
    prev = 0
    for c in change.tolist():
        append_varint(out, c - prev)
        prev = c
    append_varint(out, (end - start) - prev)


def factor(data: bytes) -> SemanticStreams:
    """Split a FASTA or FASTQ byte string into semantic streams."""
    data = bytes(data)
    if not data:
        return SemanticStreams()
    if data[0] == ord(">"):
        fmt = FASTA
    elif data[0] == ord("@"):
        fmt = FASTQ
    else:
        raise UnknownFormat(f"first byte {data[:1]!r} is neither '>' nor '@'")
    if b"\r\n" in data:
        raise NonCanonicalLineEnding("CRLF line endings are not supported")

    final_newline = data.endswith(b"\n")
    lines = (data[:-1] if final_newline else data).split(b"\n")

    headers: list[bytes] = []
    seq_parts: list[bytes] = []
    qual_parts: list[bytes] = []
    # (fmt, header_len, seq_len, line_runs, qual_flag)
    framing: list[tuple[int, int, int, list[tuple[int, int]], int]] = []

    if fmt == FASTA:
        i = 0
        n_lines = len(lines)
        while i < n_lines:
            header = lines[i][1:]
            i += 1
            j = i
            while j < n_lines and not lines[j].startswith(b">"):
                j += 1
            body = lines[i:j]
            seq_parts.extend(body)
            lengths = [len(b) for b in body]
            headers.append(header)
            framing.append((FASTA, len(header), sum(lengths), _line_runs(lengths), QUAL_NONE))
            i = j
    else:
        if len(lines) % 4:
            raise MalformedRecord("FASTQ input is not a whole number of 4-line records")
        for r in range(0, len(lines), 4):
            head, seq, sep, qual = lines[r:r + 4]
            if not head.startswith(b"@"):
                raise MalformedRecord(f"record {r // 4}: header does not start with '@'")
            if not sep.startswith(b"+"):
                raise MalformedRecord(f"record {r // 4}: separator does not start with '+'")
            if len(seq) != len(qual):
                raise MalformedRecord(
                    f"record {r // 4}: sequence length {len(seq)} != quality length {len(qual)}")
            header = head[1:]
            extra = sep[1:]
            if not extra:
                qflag = QUAL_PLUS
            elif extra == header:
                qflag = QUAL_PLUS_HEADER
            else:
                qflag = QUAL_PLUS_CUSTOM
            headers.append(header)
            if qflag == QUAL_PLUS_CUSTOM:
                headers.append(extra)
            seq_parts.append(seq)
            qual_parts.append(qual)
            framing.append((FASTQ, len(header), len(seq), [(len(seq), 1)], qflag))

    raw_seq = b"".join(seq_parts)
    nuc = raw_seq.upper()
    arr = np.frombuffer(raw_seq, dtype=np.uint8)
    is_lower = (arr >= 97) & (arr <= 122)

    ctrl = bytearray([0 if final_newline else FLAG_NO_FINAL_NEWLINE])
    case_rl = bytearray()
    records: list[Record] = []
    nuc_off = qual_off = 0
    for rec_fmt, hlen, slen, runs, qflag in framing:
        ctrl.append(rec_fmt)
        append_varint(ctrl, hlen)
        append_varint(ctrl, slen)
        append_varint(ctrl, len(runs))
        for width, rep in runs:
            append_varint(ctrl, width)
            append_varint(ctrl, rep)
        ctrl.append(qflag)
        records.append(Record(rec_fmt, hlen, slen, runs, qflag, nuc_off, len(case_rl), qual_off))
        _case_runs(is_lower, nuc_off, nuc_off + slen, case_rl)
        nuc_off += slen
        if qflag != QUAL_NONE:
            qual_off += slen

    hdr = b"".join(h + b"\n" for h in headers)
    return SemanticStreams(bytes(ctrl), hdr, nuc, bytes(case_rl), b"".join(qual_parts), records)


def parse_ctrl(ctrl: bytes) -> tuple[int, list[Record]]:
    """Decode CTRL into file flags and record framing.

    NUC and QUALITY offsets follow from CTRL alone; ``case_offset`` is left at
    zero (see :func:`case_offsets`).
    """
    if not ctrl:
        return 0, []
    rd = Reader(ctrl)
    flags = rd.u8()
    records: list[Record] = []
    nuc_off = qual_off = 0
    try:
        while rd.remaining():
            fmt = rd.u8()
            hlen = rd.varint()
            slen = rd.varint()
            nruns = rd.varint()
            runs = [(rd.varint(), rd.varint()) for _ in range(nruns)]
            qflag = rd.u8()
            records.append(Record(fmt, hlen, slen, runs, qflag, nuc_off, 0, qual_off))
            nuc_off += slen
            if qflag != QUAL_NONE:
                qual_off += slen
    except Exception as exc:
        raise InconsistentStreams(f"CTRL stream is malformed: {exc}") from exc
    return flags, records


def case_mask_for_record(case_rl: bytes, pos: int, length: int) -> tuple[np.ndarray, int]:
    """Decode one record's case runs starting at ``pos``; returns (is_lower, next_pos)."""
    rd = Reader(case_rl, pos)
    try:
        lower = bool(rd.u8())
        mask = np.zeros(length, dtype=bool)
        done = 0
        while done < length:
            run = rd.varint()
            if run == 0 or done + run > length:
                raise InconsistentStreams("case run overflows record")
            if lower:
                mask[done:done + run] = True
            done += run
            lower = not lower
    except InconsistentStreams:
        raise
    except Exception as exc:
        raise InconsistentStreams(f"CASE stream is malformed: {exc}") from exc
    return mask, rd.pos


def case_offsets(case_rl: bytes, records: list[Record]) -> list[int]:
    offsets = []
    pos = 0
    for rec in records:
        offsets.append(pos)
        _, pos = case_mask_for_record(case_rl, pos, rec.seq_len)
    return offsets


def apply_case(seq: bytes, mask: np.ndarray) -> bytes:
    if not mask.any():
        return seq
    arr = np.frombuffer(seq, dtype=np.uint8).copy()
    upper = (arr >= 65) & (arr <= 90)
    sel = mask & upper
    arr[sel] |= 0x20
    return arr.tobytes()


def reassemble(streams: SemanticStreams, *, apply_case_runs: bool = True) -> bytes:
    """Inverse of :func:`factor`.

    With ``apply_case_runs=False`` the CASE stream is ignored and every
    sequence letter is emitted uppercase.
    """
    if not streams.ctrl:
        if streams.nuc or streams.hdr or streams.quality:
            raise InconsistentStreams("empty CTRL with non-empty payload streams")
        return b""
    flags, records = parse_ctrl(streams.ctrl)
    total = sum(r.seq_len for r in records)
    if total != len(streams.nuc):
        raise InconsistentStreams(f"CTRL declares {total} symbols, NUC holds {len(streams.nuc)}")

    hdr_lines = streams.hdr.split(b"\n")
    if streams.hdr and hdr_lines[-1] == b"":
        hdr_lines.pop()
    out: list[bytes] = []
    nuc = streams.nuc
    qual = streams.quality
    hi = 0
    case_pos = 0
    nuc_off = 0
    qual_off = 0
    for rec in records:
        if hi >= len(hdr_lines):
            raise InconsistentStreams("HDR stream exhausted")
        header = hdr_lines[hi]
        hi += 1
        if len(header) != rec.header_len:
            raise InconsistentStreams("header length disagrees with CTRL")
        seq = nuc[nuc_off:nuc_off + rec.seq_len]
        if apply_case_runs:
            mask, case_pos = case_mask_for_record(streams.case_rl, case_pos, rec.seq_len)
            seq = apply_case(seq, mask)
        nuc_off += rec.seq_len
        if rec.fmt == FASTA:
            out.append(b">" + header)
            pos = 0
            for width, rep in rec.line_runs:
                for _ in range(rep):
                    out.append(seq[pos:pos + width])
                    pos += width
            if pos != rec.seq_len:
                raise InconsistentStreams("line runs disagree with sequence length")
        elif rec.fmt == FASTQ:
            q = qual[qual_off:qual_off + rec.seq_len]
            if len(q) != rec.seq_len:
                raise InconsistentStreams("QUALITY stream exhausted")
            qual_off += rec.seq_len
            if rec.qual_flag == QUAL_PLUS:
                sep = b"+"
            elif rec.qual_flag == QUAL_PLUS_HEADER:
                sep = b"+" + header
            elif rec.qual_flag == QUAL_PLUS_CUSTOM:
                if hi >= len(hdr_lines):
                    raise InconsistentStreams("HDR stream exhausted")
                sep = b"+" + hdr_lines[hi]
                hi += 1
            else:
                raise InconsistentStreams(f"bad quality flag {rec.qual_flag}")
            out.extend((b"@" + header, seq, sep, q))
        else:
            raise InconsistentStreams(f"unknown record format tag {rec.fmt}")
    if qual_off != len(qual):
        raise InconsistentStreams("QUALITY stream has trailing bytes")
    text = b"\n".join(out)
    if not flags & FLAG_NO_FINAL_NEWLINE:
        text += b"\n"
    return text
