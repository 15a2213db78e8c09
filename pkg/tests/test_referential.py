from __future__ import annotations

import math
import random

import numpy as np
import pytest

from strandpack.container import CodecConfig, ContainerReader, ROLE_LITERALS, ROLE_SCRIPT
from strandpack.errors import CorruptScript, ReferenceMismatch
from strandpack.referential import (MIN_MATCH, BloomFilter, PatchScript, apply_patch,
                                    conditional_entropy_bound, diff_container, diff_stream,
                                    reconstruct)

from conftest import iid_acgt, random_fasta, wrap


def mutate(seq: bytes, positions, rng: random.Random) -> bytes:
    out = bytearray(seq)
    for i in positions:
        out[i] = rng.choice([c for c in b"ACGT" if c != out[i]])
    return bytes(out)


def spaced_positions(n: int, r: int, gap: int, rng: random.Random) -> list[int]:
    # r positions, each at least ``gap`` from the others and from both ends
    slots = rng.sample(range(1, n // gap - 1), r)
    return sorted(s * gap + rng.randrange(gap // 4) for s in slots)


def test_identity_is_one_copy():
    ref = iid_acgt(5000, seed=1)
    script, lits = diff_stream(ref, ref)
    assert script.ops == [("copy", 0, 5000)]
    assert lits == b""


def test_empty_reference_is_one_literal():
    tgt = iid_acgt(300, seed=2)
    script, lits = diff_stream(b"", tgt)
    assert script.ops == [("literal", 300)]
    assert lits == tgt
    assert apply_patch(b"", script, lits) == tgt


def test_empty_target():
    script, lits = diff_stream(iid_acgt(100, seed=3), b"")
    assert script.ops == [] and lits == b""


def test_short_matches_become_literals():
    ref = iid_acgt(2000, seed=4)
    tgt = ref[100:100 + MIN_MATCH - 1]
    script, _ = diff_stream(ref, tgt)
    assert script.ops == [("literal", MIN_MATCH - 1)]
    script, _ = diff_stream(ref, ref[100:100 + MIN_MATCH])
    assert script.ops == [("copy", 100, MIN_MATCH)]


def test_apply_patch_example():
    ref = b"ACGTACGTTTGCA"
    script = PatchScript([("copy", 4, 4), ("literal", 2), ("copy", -8, 3)])
    assert apply_patch(ref, script, b"NN") == b"ACGTNNACG"


@pytest.mark.parametrize("ops, lits", [
    ([("copy", 10, 5)], b""),
    ([("copy", -1, 5)], b""),
    ([("literal", 3)], b"AC"),
    ([("literal", 1)], b"AC"),
    ([("insert", 1)], b"A"),
])
def test_apply_patch_rejects_bad_scripts(ops, lits):
    with pytest.raises(CorruptScript):
        apply_patch(b"ACGTACGT", PatchScript(ops), lits)


def test_script_serialization_roundtrip():
    script = PatchScript([("copy", 0, 1000), ("literal", 1), ("copy", 1, 5000),
                          ("copy", -123456, 30), ("literal", 70000)])
    assert PatchScript.parse(script.serialize()) == script
    assert PatchScript.parse(PatchScript().serialize()) == PatchScript()


def test_script_parse_rejects_garbage():
    raw = PatchScript([("copy", 0, 1000), ("literal", 1)]).serialize()
    for bad in (raw[:-1], raw + b"\x00", b"\x05", b""):
        with pytest.raises(CorruptScript):
            PatchScript.parse(bad)


def test_fuzz_roundtrip():
    rng = random.Random(5)
    for _ in range(60):
        ref = iid_acgt(rng.randint(0, 3000), seed=rng.randrange(10**6))
        tgt = bytearray()
        while len(tgt) < rng.randint(0, 4000):
            if ref and rng.random() < 0.6:
                a = rng.randrange(len(ref))
                tgt += ref[a:a + rng.randint(1, 400)]
            else:
                tgt += iid_acgt(rng.randint(1, 60), seed=rng.randrange(10**6))
        script, lits = diff_stream(ref, bytes(tgt))
        assert apply_patch(ref, script, lits) == bytes(tgt)
        assert len(lits) == script.literal_bytes
        assert all(op[2] >= MIN_MATCH for op in script.ops if op[0] == "copy")


def test_bloom_filter_has_no_false_negatives():
    seq = np.frombuffer(iid_acgt(20_000, seed=6), dtype=np.uint8)
    bloom = BloomFilter(seq)
    assert bloom.contains_all(seq)[: len(seq) - 15].all()
    raw = seq.tobytes()
    for i in range(0, len(raw) - 16, 997):
        assert raw[i:i + 16] in bloom


def test_bloom_filter_false_positive_rate():
    bloom = BloomFilter(np.frombuffer(iid_acgt(50_000, seed=7), dtype=np.uint8))
    probe = np.frombuffer(iid_acgt(50_000, seed=8), dtype=np.uint8)
    rate = bloom.contains_all(probe)[: len(probe) - 15].mean()
    # 10 bits per element and 7 probes gives about 0.8%
    assert rate < 0.02


def test_bloom_does_not_change_the_script():
    rng = random.Random(9)
    ref = iid_acgt(30_000, seed=9)
    tgt = mutate(ref, spaced_positions(len(ref), 40, 500, rng), rng)
    assert diff_stream(ref, tgt, use_bloom=True) == diff_stream(ref, tgt, use_bloom=False)


@pytest.mark.parametrize("r", [1, 5, 40])
def test_descriptor_count_is_two_r_plus_one(r):
    rng = random.Random(r)
    ref = iid_acgt(40_000, seed=10 + r)
    tgt = mutate(ref, spaced_positions(len(ref), r, 600, rng), rng)
    script, lits = diff_stream(ref, tgt)
    assert abs(len(script.ops) - (2 * r + 1)) <= 1
    assert len(lits) == r


def test_more_divergence_never_helps():
    rng = random.Random(11)
    ref = iid_acgt(200_000, seed=11)
    sizes = []
    positions = list(range(len(ref)))
    rng.shuffle(positions)
    for p in (0.0005, 0.002, 0.008):
        tgt = mutate(ref, positions[: int(p * len(ref))], rng)
        data = lambda s: b">chr\n" + wrap(s.decode(), 80).encode()  # noqa: E731
        sizes.append(len(diff_container(data(ref), data(tgt))))
    assert sizes == sorted(sizes)
    assert sizes[0] < sizes[-1]


def test_conditional_entropy_bound_examples():
    assert conditional_entropy_bound(0.0, 4) == 0.0
    assert conditional_entropy_bound(0.5, 2) == pytest.approx(1.0)
    assert conditional_entropy_bound(0.75, 4) == pytest.approx(2.0)
    h2 = -(0.006 * math.log2(0.006) + 0.994 * math.log2(0.994))
    assert conditional_entropy_bound(0.006, 4) == pytest.approx(h2 + 0.006 * math.log2(3))
    assert conditional_entropy_bound(0.006, 4) == pytest.approx(0.0624, abs=5e-4)
    with pytest.raises(ValueError):
        conditional_entropy_bound(1.5, 4)


def test_container_roundtrip_fasta(rng):
    ref = random_fasta(rng, 15, 2000, "ACGTacgtN")
    tgt_bytes = bytearray(ref)
    for _ in range(40):
        i = rng.randrange(len(tgt_bytes))
        if tgt_bytes[i:i + 1] in (b"A", b"C"):
            tgt_bytes[i:i + 1] = b"T"
    tgt = bytes(tgt_bytes) + b">extra\nACGTNNNNRYacgt\n"
    blob = diff_container(ref, tgt, reference_name="ref.fa")
    reader = ContainerReader(blob)
    assert reader.reference.name == "ref.fa"
    assert {e.role for e in reader.entries} == {ROLE_SCRIPT, ROLE_LITERALS}
    assert reconstruct(ref, blob) == tgt
    assert reconstruct(ref, blob, threads=4) == tgt


def test_container_roundtrip_fastq():
    from conftest import random_fastq
    ref = random_fastq(random.Random(12), 50)
    tgt = random_fastq(random.Random(12), 60)
    assert reconstruct(ref, diff_container(ref, tgt)) == tgt


def test_identity_container_is_tiny():
    ref = b">chr\n" + wrap(iid_acgt(100_000, seed=13).decode(), 60).encode()
    blob = diff_container(ref, ref)
    assert len(blob) < 1024
    assert reconstruct(ref, blob) == ref


def test_wrong_reference_is_rejected():
    ref = b">chr\n" + wrap(iid_acgt(5000, seed=14).decode(), 60).encode()
    blob = diff_container(ref, ref)
    other = ref[:-2] + b"A\n"
    with pytest.raises(ReferenceMismatch):
        reconstruct(other, blob)


def test_literal_codec_override():
    ref = b">chr\n" + wrap(iid_acgt(20_000, seed=15).decode(), 60).encode()
    tgt = ref.replace(b"ACGTA", b"ACCTA")
    blob = diff_container(ref, tgt, CodecConfig(nuc="markov-mix"), literal_codec="lz-ext")
    assert ContainerReader(blob).entry("NUC", ROLE_LITERALS).codec == "lz-ext"
    assert reconstruct(ref, blob) == tgt
