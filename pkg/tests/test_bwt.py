from __future__ import annotations

import itertools
import random

import numpy as np
import pytest

from strandpack.bwt import (AUX_ENTRIES, BwtBlock, CHUNK_SIZE, bwt_forward, bwt_inverse,
                            meta_bits, parse_meta, sa_width_for, serialize_meta, stride_for)
from strandpack.errors import CorruptBlock
from strandpack.sais import suffix_array

from conftest import iid_acgt, naive_bwt


def brute_sa(s) -> list[int]:
    s = bytes(s)
    return sorted(range(len(s)), key=lambda i: s[i:])


def test_suffix_array_random_small():
    rng = random.Random(1)
    for _ in range(500):
        s = bytes(rng.choice(b"ab" if rng.random() < 0.5 else b"ACGT") for _ in range(rng.randint(1, 60)))
        sa = suffix_array(np.frombuffer(s, dtype=np.uint8), 255)
        assert sa.tolist() == brute_sa(s)


def test_suffix_array_periodic():
    for s in [b"a" * 100, b"ab" * 57, b"abcabcabd" * 11, b"mississippi"]:
        assert suffix_array(np.frombuffer(s, dtype=np.uint8), 255).tolist() == brute_sa(s)


def test_banana():
    b = bwt_forward(b"banana")
    assert (b.l, b.primary) == (b"nnbaaa", 3)
    assert bwt_inverse(BwtBlock(b"nnbaaa", 6, 32, 3, None, stride_for(6))) == b"banana"


def test_single_symbol():
    b = bwt_forward(b"a")
    assert (b.l, b.primary) == (b"a", 0)
    assert bwt_inverse(b) == b"a"


def test_periodic_matches_oracle():
    for s in [b"aaaa", b"abab", b"abcabc", b"aabaab"]:
        b = bwt_forward(s)
        assert (b.l, b.primary) == naive_bwt(s)
        assert bwt_inverse(b) == s


def test_exhaustive_short_strings():
    for n in range(1, 7):
        for t in itertools.product(b"abc", repeat=n):
            s = bytes(t)
            b = bwt_forward(s)
            assert (b.l, b.primary) == naive_bwt(s)
            assert bwt_inverse(b) == s


def test_stride_formula():
    assert stride_for(1 << 20) == 1 << 17
    assert stride_for(1) == 1
    rng = random.Random(2)
    for _ in range(1000):
        n = rng.randint(64, 1 << 40)
        r = stride_for(n)
        assert r & (r - 1) == 0
        assert 8 <= -(-n // r) <= 16


def test_sa_width_dispatch():
    assert sa_width_for(2**31 - 1) == 32
    assert sa_width_for(2**31) == 64


def test_meta_bits_examples():
    assert meta_bits(1 << 24, 32) == 8 + 16 + 8192 + 64 + 64 == 8344
    assert meta_bits(1 << 25, 64) == 16600
    assert meta_bits(1, 32) == 8344


def test_small_block_meta_and_roundtrip():
    data = iid_acgt(1000, seed=3)
    b = bwt_forward(data)
    assert b.aux is None
    meta = serialize_meta(b, [17])
    assert 8 * len(meta) == meta_bits(len(data), 32, aux=False)
    head, pos = parse_meta(meta)
    assert pos == len(meta)
    assert head["primary"] == b.primary
    assert head["aux"] is None


def test_aux_table_rows():
    data = iid_acgt(40_000, seed=4)
    b = bwt_forward(data)
    assert b.aux is not None
    assert len(b.aux) == AUX_ENTRIES
    used = b.anchor_count
    assert used == -(-len(data) // b.stride)
    assert not b.aux[used:].any()
    # anchor j marks the row whose rotation starts at j * stride
    sa = suffix_array(np.frombuffer(data + data, dtype=np.uint8), 255)
    rows = [int(v) for v in sa if v < len(data)]
    for j in range(used):
        assert rows[int(b.aux[j])] == j * b.stride


def test_one_mib_roundtrip_via_aux():
    data = iid_acgt(1 << 20, seed=5)
    b = bwt_forward(data)
    assert b.stride == 1 << 17
    assert bwt_inverse(b, use_aux=True) == data
    assert bwt_inverse(b, use_aux=False) == data


def test_corrupt_anchor_detected():
    data = iid_acgt(50_000, seed=6)
    b = bwt_forward(data)
    aux = b.aux.copy()
    aux[2] = aux[3]
    with pytest.raises(CorruptBlock):
        bwt_inverse(BwtBlock(b.l, b.n, b.sa_width, b.primary, aux, b.stride))


def test_serialize_parse_anchor_form():
    data = iid_acgt(1 << 16, seed=7)
    b = bwt_forward(data)
    for w in (32, 64):
        meta = serialize_meta(b, [123], sa_width=w)
        assert 8 * len(meta) == meta_bits(b.n, w)
        head, _ = parse_meta(meta)
        assert head["sa_width"] == w
        assert head["stride"] == b.stride
        assert head["primary"] == b.primary
        assert np.array_equal(head["aux"], b.aux)
        assert head["chunk_sizes"] == [123]


def test_meta_chunk_count():
    b = BwtBlock(b"", CHUNK_SIZE + 1, 32, 0, np.zeros(AUX_ENTRIES, dtype=np.uint64), stride_for(CHUNK_SIZE + 1))
    meta = serialize_meta(b, [5, 1])
    assert 8 * len(meta) == meta_bits(CHUNK_SIZE + 1, 32)


@pytest.mark.parametrize("unit", [b"A", b"ab", b"ACGTTGCA" * 3])
def test_periodic_block_with_anchors(unit):
    data = unit * (40_000 // len(unit))
    b = bwt_forward(data)
    assert b.aux is not None
    assert bwt_inverse(b, use_aux=True) == data
    assert bwt_inverse(b, use_aux=False) == data
