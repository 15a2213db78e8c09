from __future__ import annotations

import math

import numpy as np
import pytest

from strandpack import markov
from strandpack.errors import CorruptPayload
from strandpack.markov import (BLOCK, FULL_PROFILE, LITE_PROFILE, LN, ExpertBank, ExpertParams,
                               advance_context, advance_reverse, frequencies, table_bytes)
from strandpack.varint import encode_varint

from mix_oracle import ln_micro, reference_encode


def header_len(n: int) -> int:
    return 2 + len(encode_varint(n))


def test_profile_tuples():
    assert [(e.k, e.alpha, e.rho, e.rho_rc, e.c_max) for e in FULL_PROFILE] == [
        (3, 0, 0, 0, 65535), (7, 0, 0, 0, 1023), (11, 2, 0, 1, 255), (15, 6, 1, 1, 15), (13, 9, 1, 0, 0)]
    assert [e.cell_bits for e in FULL_PROFILE] == [16, 16, 8, 4, 8]
    assert LITE_PROFILE == FULL_PROFILE[:3]
    for e in FULL_PROFILE:
        assert e.c_max < 2 ** e.cell_bits


def test_memory_accounting():
    sizes = table_bytes("full")
    assert sizes == [512, 131072, 16 * 2**20, 2 * 2**30, 256 * 2**20]
    assert sum(sizes) == 2_432_827_904
    assert sum(table_bytes("lite")) <= 64 * 2**20


def test_frequency_examples():
    assert frequencies([0, 0, 0, 0], 0) == ([1, 1, 1, 1], 4)
    assert frequencies([3, 0, 0, 0], 2) == ([13, 1, 1, 1], 16)
    assert frequencies([0, 0, 1, 0], 9) == ([1, 1, 513, 1], 516)


def test_alpha_zero_is_laplace():
    for counts in ([0, 1, 2, 3], [100, 0, 5, 9]):
        f, total = frequencies(counts, 0)
        assert f == [c + 1 for c in counts]
        assert total == sum(counts) + 4


def test_saturating_expert_after_one_observation():
    bank = ExpertBank((ExpertParams(13, 9, 1, 0, 0, 8),))
    bank.observe(2, winner=0)
    assert bank.counts(0, 0) == [0, 0, 1, 0]
    # context has moved on; the next observation lands in a fresh context
    assert bank.predict_symbol(0, 2) == (1, 4)
    assert frequencies(bank.counts(0, 0), 9) == ([1, 1, 513, 1], 516)


def test_saturation_halves_then_increments():
    bank = ExpertBank((ExpertParams(1, 0, 0, 0, 3, 16),))
    for _ in range(3):
        bank.observe(1, winner=0)
        bank.H[0] = 0
    bank.observe(0, winner=0)
    bank.H[0] = 0
    assert bank.counts(0, 0) == [1, 3, 0, 0]
    bank.observe(1, winner=0)
    assert bank.counts(0, 0) == [0, 2, 0, 0]


def test_nibble_cells_saturate_at_fifteen():
    bank = ExpertBank((ExpertParams(1, 0, 0, 0, 15, 4),))
    for _ in range(15):
        bank.H[0] = 0
        bank.observe(3, winner=0)
    assert bank.counts(0, 0) == [0, 0, 0, 15]
    bank.H[0] = 1
    bank.observe(2, winner=0)
    assert bank.counts(0, 1) == [0, 0, 1, 0]
    assert bank.counts(0, 0) == [0, 0, 0, 15]
    # the sixteenth hit halves 15 to 7 before incrementing
    bank.H[0] = 0
    bank.observe(3, winner=0)
    assert bank.counts(0, 0) == [0, 0, 0, 8]


def test_context_examples():
    assert advance_context(6, 3, 3) == 27
    assert advance_reverse(0, 3, 0) == 48
    h = 37
    for x in (2, 0, 3):
        h = advance_context(h, 3, x)
    assert h == 2 * 16 + 0 * 4 + 3


def test_reverse_complement_update():
    bank = ExpertBank((ExpertParams(2, 0, 0, 1, 255, 16),))
    for x in (0, 1, 2):
        bank.observe(x, winner=0)
    # reverse context after A,C,G is comp(G)comp(C) = C,G -> 1*4+2 = 6; on the
    # other strand it is followed by comp of the symbol k back (A -> T)
    assert bank.R[0] == 6
    assert bank.counts(0, 6) == [0, 0, 0, 1]


def test_ln_table():
    assert LN[1] == 0
    assert LN[4] == 1386294
    for v in (2, 3, 1000, 12345, 2**20):
        assert LN[v] == math.floor(1e6 * math.log(v))
    assert ln_micro(262148) == LN[262148]
    assert markov.ln_fixed(4 * 2**20, LN) == ln_micro(4 * 2**20)


def test_fresh_bank_scores_uniform():
    bank = ExpertBank("lite")
    block = np.random.default_rng(0).integers(0, 4, BLOCK)
    assert bank.score_block(block).tolist() == [80 * 1386294] * 3


def test_saturated_prediction_costs_almost_nothing():
    bank = ExpertBank((ExpertParams(1, 9, 0, 0, 0, 8),))
    bank.observe(0, winner=0)   # context 0 learns A
    bank.observe(0, winner=0)
    cost = bank.score_block([0, 0])[0]
    # P = 513/516 each step
    assert cost == 2 * (LN[516] - LN[513])
    assert cost <= 2 * 6000


def test_homopolymer_warmup_lowers_order3_cost():
    bank = ExpertBank("lite")
    fresh = bank.score_block([0] * BLOCK)[0]
    for _ in range(BLOCK):
        bank.observe(0, winner=0)
    assert bank.score_block([0] * BLOCK)[0] < fresh


def test_score_does_not_mutate():
    bank = ExpertBank("lite")
    for x in np.random.default_rng(1).integers(0, 4, 500):
        bank.observe(int(x), winner=1)
    before = bank.snapshot(), bank.H.copy()
    bank.score_block(np.random.default_rng(2).integers(0, 4, BLOCK))
    assert bank.snapshot() == before[0]
    assert np.array_equal(bank.H, before[1])


def test_non_winner_rho0_counts_untouched():
    bank = ExpertBank("lite")
    t16, t8 = bank.snapshot()
    for x in np.random.default_rng(3).integers(0, 4, 300):
        bank.observe(int(x), winner=0)
    a16, a8 = bank.snapshot()
    # expert 0 lives in the 16-bit arena before expert 1; expert 2 is the only byte table
    off1 = 4 ** 3 * 4
    assert a16[2 * off1:] == t16[2 * off1:]
    assert a8 == t8
    assert a16[:2 * off1] != t16[:2 * off1]


def test_tie_break_prefers_lowest_index():
    codes = np.zeros(BLOCK, dtype=np.uint8)
    _, stats = markov.encode(codes, 2, "lite")
    # fresh bank: all experts tie on the first block
    assert stats.choices[0] == 0


@pytest.mark.parametrize("width", [2, 4])
def test_roundtrip_random_periodic_iupac(width):
    rng = np.random.default_rng(width)
    parts = [rng.integers(0, 4, 3000), np.tile([0, 1, 2, 3, 3, 1], 500), rng.integers(0, 4, 77)]
    if width == 4:
        parts.append(rng.integers(0, 16, 900))
        parts.append(np.full(200, 4))
    codes = np.concatenate(parts).astype(np.uint8)
    payload, stats = markov.encode(codes, width, "lite")
    back, w = markov.decode(payload)
    assert w == width
    assert np.array_equal(back, codes)
    assert stats.blocks == -(-len(codes) // BLOCK)


def test_empty_and_short_streams():
    for codes in ([], [2], [1, 2, 3]):
        payload, _ = markov.encode(np.asarray(codes, dtype=np.uint8), 2)
        back, _ = markov.decode(payload)
        assert back.tolist() == codes


def test_matches_reference_two_bit():
    rng = np.random.default_rng(4)
    codes = rng.integers(0, 4, 12_000).astype(np.uint8)
    codes[3000:6000] = np.tile(rng.integers(0, 4, 150), 20)
    payload, stats = markov.encode(codes, 2, "lite")
    body, winners, writes, _ = reference_encode(codes, 2, LITE_PROFILE)
    assert payload[header_len(len(codes)):] == body
    assert stats.choices.tolist() == winners
    assert stats.count_writes == writes


def test_matches_reference_four_bit():
    rng = np.random.default_rng(5)
    codes = rng.integers(0, 4, 8000).astype(np.uint8)
    hits = rng.random(8000) < 0.03
    codes[hits] = rng.integers(4, 16, hits.sum())
    payload, stats = markov.encode(codes, 4, "lite")
    body, winners, writes, experts = reference_encode(codes, 4, LITE_PROFILE)
    assert payload[header_len(len(codes)):] == body
    assert stats.choices.tolist() == winners
    assert stats.unknown_count_writes == 0
    _, _, bank = markov.decode(payload, return_bank=True)
    for m, e in enumerate(experts):
        for h, row in e.counts.items():
            assert bank.counts(m, h) == row


def test_selector_cost_bounded():
    codes = np.random.default_rng(6).integers(0, 4, 50_000).astype(np.uint8)
    _, stats = markov.encode(codes, 2, "lite")
    assert stats.selector_bits_per_block <= math.log2(5) + 0.01


def test_corrupt_payload_detected():
    codes = np.random.default_rng(7).integers(0, 4, 2000).astype(np.uint8)
    payload, _ = markov.encode(codes, 2)
    with pytest.raises(CorruptPayload):
        markov.decode(bytes([9]) + payload[1:])
    with pytest.raises(CorruptPayload):
        markov.decode(payload, expected_n=5)


def test_rejects_out_of_range_codes():
    with pytest.raises(ValueError):
        markov.encode(np.asarray([0, 4], dtype=np.uint8), 2)


@pytest.mark.slow
def test_full_profile_roundtrip():
    codes = np.random.default_rng(8).integers(0, 4, 20_000).astype(np.uint8)
    payload, _ = markov.encode(codes, 2, "full")
    back, _ = markov.decode(payload)
    assert np.array_equal(back, codes)
