from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from strandpack.errors import (InconsistentStreams, MalformedRecord, NonCanonicalLineEnding,
                               UnknownFormat)
from strandpack.streams import (FASTA, FASTQ, QUAL_NONE, QUAL_PLUS, SemanticStreams,
                                case_mask_for_record, factor, parse_ctrl, reassemble)

from conftest import random_fasta, random_fastq, wrap


def test_single_fasta_record():
    s = factor(b">h\nACGT\n")
    assert s.hdr == b"h\n"
    assert s.nuc == b"ACGT"
    assert s.quality == b""
    flags, recs = parse_ctrl(s.ctrl)
    assert flags == 0
    assert len(recs) == 1
    assert recs[0].fmt == FASTA
    assert recs[0].seq_len == 4
    assert recs[0].line_runs == [(4, 1)]
    assert recs[0].qual_flag == QUAL_NONE
    assert reassemble(s) == b">h\nACGT\n"


def test_lowercase_goes_to_case_stream():
    s = factor(b">h\nacGT\n")
    assert s.nuc == b"ACGT"
    # initial lower, then runs 2, 2
    assert s.case_rl == bytes([1, 2, 2])
    mask, end = case_mask_for_record(s.case_rl, 0, 4)
    assert mask.tolist() == [True, True, False, False]
    assert end == 3


def test_minimal_fastq():
    s = factor(b"@r\nACGT\n+\n!!!!\n")
    assert s.quality == b"!!!!"
    _, recs = parse_ctrl(s.ctrl)
    assert recs[0].fmt == FASTQ
    assert recs[0].qual_flag == QUAL_PLUS
    assert reassemble(s) == b"@r\nACGT\n+\n!!!!\n"


def test_two_record_wrapped_fasta():
    seq1 = "ACGT" * 40
    seq2 = "GGCCA" * 31
    data = (">one\n" + wrap(seq1, 60) + ">two desc\n" + wrap(seq2, 60)).encode()
    s = factor(data)
    _, recs = parse_ctrl(s.ctrl)
    assert [r.line_runs for r in recs] == [[(60, 2), (40, 1)], [(60, 2), (35, 1)]]
    assert reassemble(s) == data


@pytest.mark.parametrize("data", [
    b"",
    b">h",
    b">h\n",
    b">h\nACGT",
    b">\n\n\n",
    b">a\n>b\nAC\n",
    b">a\nAC\n\nGT\n",
    b"@r\n\n+\n\n",
    b"@r\nAC\n+r\nII\n@s\nGT\n+xx\n##",
    b">x\nACGT\nAC\nACGT\n",
    b">x\nacgtNNnnRYry**\n",
])
def test_edge_roundtrips(data):
    assert reassemble(factor(data)) == data


def test_errors():
    with pytest.raises(UnknownFormat):
        factor(b"ACGT\n")
    with pytest.raises(NonCanonicalLineEnding):
        factor(b">h\r\nACGT\r\n")
    with pytest.raises(MalformedRecord):
        factor(b"@r\nACGT\n+\n!!!\n")
    with pytest.raises(MalformedRecord):
        factor(b"@r\nACGT\n+\n")
    with pytest.raises(MalformedRecord):
        factor(b"@r\nACGT\nX\nIIII\n")


def test_inconsistent_streams():
    s = factor(b">h\nACGT\n")
    with pytest.raises(InconsistentStreams):
        reassemble(SemanticStreams(s.ctrl, s.hdr, b"ACG", s.case_rl, s.quality))
    with pytest.raises(InconsistentStreams):
        reassemble(SemanticStreams(b"", b"", b"A", b"", b""))


def test_random_fastq_corpus_roundtrip():
    rng = random.Random(7)
    data = random_fastq(rng, 10_000)
    s = factor(data)
    assert len(s.quality) == len(s.nuc)
    assert reassemble(s) == data


def test_random_fasta_corpus_roundtrip():
    rng = random.Random(8)
    data = random_fasta(rng, 300)
    assert reassemble(factor(data)) == data


def test_uppercase_reassembly_drops_case_only():
    rng = random.Random(9)
    data = random_fasta(rng, 50)
    s = factor(data)
    upper = reassemble(s, apply_case_runs=False)
    expected = b"\n".join(line if line.startswith(b">") else line.upper() for line in data.split(b"\n"))
    assert upper == expected


def test_factor_is_deterministic():
    data = random_fastq(random.Random(3), 200)
    a, b = factor(data), factor(data)
    assert (a.ctrl, a.hdr, a.nuc, a.case_rl, a.quality) == (b.ctrl, b.hdr, b.nuc, b.case_rl, b.quality)


def test_extra_raw_lists_non_iupac():
    s = factor(b">h\nAC*G-T\n")
    assert s.extra_raw == [(2, ord("*")), (4, ord("-"))]


def test_nuc_length_matches_ctrl():
    data = random_fasta(random.Random(4), 40)
    s = factor(data)
    _, recs = parse_ctrl(s.ctrl)
    assert sum(r.seq_len for r in recs) == len(s.nuc)
    assert s.nuc == s.nuc.upper()


_line = st.text(alphabet="ACGTacgtNn*", max_size=30)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.text(alphabet="abc xyz|", max_size=10), st.lists(_line, max_size=5)),
                min_size=1, max_size=5), st.booleans())
def test_fasta_roundtrip_property(records, final_newline):
    text = "".join(">" + h + "\n" + "".join(l + "\n" for l in lines) for h, lines in records)
    if not final_newline:
        text = text[:-1]
    data = text.encode()
    assert reassemble(factor(data)) == data
