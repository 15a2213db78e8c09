"""Blockwise Markov expert-competition codec over nucleotide codes.

For every block of 80 symbols each expert is scored by a fixed-point
cross-entropy surrogate with its counts frozen at block start; the cheapest
expert (lowest index on ties) is range-coded under an order-5 model over
previous choices and then codes the block's symbols.  The winner always
updates its counts; other experts update counts only when their ``rho`` flag
is set, and otherwise just advance their contexts.  Experts with ``rho_rc``
also maintain a reverse-complement context and update the complementary
count there.

In 4-bit mode codes 4..15 are IUPAC ambiguity symbols.  They are routed
through a block flag, a per-symbol gate and a 12-way unknown model, and never
touch expert counts; expert contexts advance over them with code 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .coders import (OUT_POS, new_encoder_state, range_decode_freq, range_decode_update,
                     range_decoder_state, range_encode, range_flush)
from .errors import CorruptPayload
from .varint import Reader, encode_varint

BLOCK = 80
SELECTOR_ORDER = 5
SELECTOR_LIMIT = 1 << 12
SMALL_INC = 16
SMALL_LIMIT = 1 << 13
N_UNKNOWN = 12
MAX_TOTAL = 1 << 16
LN_TABLE_BITS = 20


@dataclass(frozen=True)
class ExpertParams:
    k: int
    alpha: int
    rho: int
    rho_rc: int
    c_max: int
    cell_bits: int

    @property
    def table_bytes(self) -> int:
        return 4 ** self.k * 4 * self.cell_bits // 8


FULL_PROFILE = (
    ExpertParams(3, 0, 0, 0, 65535, 16),
    ExpertParams(7, 0, 0, 0, 1023, 16),
    ExpertParams(11, 2, 0, 1, 255, 8),
    ExpertParams(15, 6, 1, 1, 15, 4),
    ExpertParams(13, 9, 1, 0, 0, 8),
)
LITE_PROFILE = FULL_PROFILE[:3]
PROFILES = {"full": (0, FULL_PROFILE), "lite": (1, LITE_PROFILE)}
PROFILE_BY_ID = {pid: (name, prof) for name, (pid, prof) in PROFILES.items()}

# column layout of the parameter matrix handed to the kernels
P_K, P_ALPHA, P_RHO, P_RC, P_CMAX, P_BITS, P_OFF = range(7)


def _ln_table() -> np.ndarray:
    i = np.arange(1 << LN_TABLE_BITS | 1, dtype=np.float64)
    i[0] = 1.0
    return np.floor(1e6 * np.log(i)).astype(np.int64)


LN = _ln_table()
LN2_MICRO = int(math.floor(1e6 * math.log(2)))


@njit(cache=True, nogil=True, inline="always")
def ln_fixed(v, ln):
    """floor(1e6 * ln v) from the table, decomposing v = a * 2**b beyond it."""
    b = 0
    while v > (1 << LN_TABLE_BITS):
        v >>= 1
        b += 1
    return ln[v] + b * LN2_MICRO


def advance_context(h: int, k: int, x: int) -> int:
    return ((h % 4 ** (k - 1)) << 2) + x


def advance_reverse(hr: int, k: int, x: int) -> int:
    return (hr >> 2) + (3 - x) * 4 ** (k - 1)


def frequencies(counts, alpha: int) -> tuple[list[int], int]:
    f = [1 + (c << alpha) for c in counts]
    return f, sum(f)


def param_matrix(profile) -> tuple[np.ndarray, int, int]:
    """Parameter rows plus the sizes of the 16-bit and byte arenas."""
    rows = []
    off16 = off8 = 0
    for e in profile:
        cells = 4 ** e.k * 4
        if e.cell_bits == 16:
            off, off16 = off16, off16 + cells
        elif e.cell_bits == 8:
            off, off8 = off8, off8 + cells
        elif e.cell_bits == 4:
            off, off8 = off8, off8 + cells // 2
        else:
            raise ValueError(f"unsupported cell width {e.cell_bits}")
        rows.append((e.k, e.alpha, e.rho, e.rho_rc, e.c_max, e.cell_bits, off))
    return np.asarray(rows, dtype=np.int64), off16, off8


# ---------------------------------------------------------------- table access

@njit(cache=True, nogil=True, inline="always")
def _get(t16, t8, bits, off, idx):
    if bits == 16:
        return np.int64(t16[off + idx])
    if bits == 8:
        return np.int64(t8[off + idx])
    b = t8[off + (idx >> 1)]
    if idx & 1:
        return np.int64(b >> 4)
    return np.int64(b & 15)


@njit(cache=True, nogil=True, inline="always")
def _set(t16, t8, bits, off, idx, v):
    if bits == 16:
        t16[off + idx] = v
    elif bits == 8:
        t8[off + idx] = v
    else:
        pos = off + (idx >> 1)
        b = t8[pos]
        if idx & 1:
            t8[pos] = (b & 0x0F) | (v << 4)
        else:
            t8[pos] = (b & 0xF0) | v


@njit(cache=True, nogil=True, inline="always")
def _bump(t16, t8, P, m, h, s):
    bits = P[m, P_BITS]
    off = P[m, P_OFF]
    cmax = P[m, P_CMAX]
    base = h * 4
    if cmax == 0:
        for a in range(4):
            _set(t16, t8, bits, off, base + a, 0)
        _set(t16, t8, bits, off, base + s, 1)
        return
    c = _get(t16, t8, bits, off, base + s)
    if c >= cmax:
        for a in range(4):
            _set(t16, t8, bits, off, base + a, _get(t16, t8, bits, off, base + a) >> 1)
        c = _get(t16, t8, bits, off, base + s)
    _set(t16, t8, bits, off, base + s, c + 1)


@njit(cache=True, nogil=True, inline="always")
def _freqs(t16, t8, P, m, h, f):
    bits = P[m, P_BITS]
    off = P[m, P_OFF]
    alpha = P[m, P_ALPHA]
    total = 0
    for a in range(4):
        v = 1 + (_get(t16, t8, bits, off, h * 4 + a) << alpha)
        f[a] = v
        total += v
    return total


@njit(cache=True, nogil=True)
def _observe(t16, t8, P, H, R, x, unknown, winner, writes):
    """Apply one symbol to every expert.  ``writes[0]`` counts count-table
    writes, ``writes[1]`` those made while the symbol is unknown."""
    for m in range(P.shape[0]):
        k = P[m, P_K]
        mask = (np.int64(1) << (2 * k)) - 1
        h = H[m]
        xe = 0 if unknown else x
        full = (m == winner) or P[m, P_RHO] == 1
        if full and not unknown:
            _bump(t16, t8, P, m, h, x)
            writes[0] += 1
        if P[m, P_RC] == 1:
            r = (R[m] >> 2) | (np.int64(3 - xe) << (2 * k - 2))
            if full and not unknown:
                _bump(t16, t8, P, m, r, 3 - ((h >> (2 * k - 2)) & 3))
                writes[0] += 1
            R[m] = r
        H[m] = ((h << 2) | xe) & mask


@njit(cache=True, nogil=True)
def _score(t16, t8, P, H, codes, lo, hi, width, ln, costs):
    f = np.empty(4, dtype=np.int64)
    for m in range(P.shape[0]):
        k = P[m, P_K]
        mask = (np.int64(1) << (2 * k)) - 1
        h = H[m]
        cost = 0
        for t in range(lo, hi):
            x = codes[t]
            if width == 4 and x >= 4:
                h = (h << 2) & mask
                continue
            total = _freqs(t16, t8, P, m, h, f)
            cost += ln_fixed(total, ln) - ln_fixed(f[x], ln)
            h = ((h << 2) | x) & mask
        costs[m] = cost


@njit(cache=True, nogil=True, inline="always")
def _scaled_total(f, n):
    """Shrink frequencies in place until their sum fits the range coder."""
    total = 0
    for a in range(n):
        total += f[a]
    while total > MAX_TOTAL:
        total = 0
        for a in range(n):
            v = f[a] >> 1
            if v < 1:
                v = 1
            f[a] = v
            total += v
    return total


@njit(cache=True, nogil=True, inline="always")
def _small_adapt(row, s, inc, limit):
    row[s] += inc
    total = 0
    for a in range(len(row)):
        total += row[a]
    if total > limit:
        for a in range(len(row)):
            row[a] = (row[a] + 1) >> 1


@njit(cache=True, nogil=True, inline="always")
def _cum(row, s):
    c = 0
    for a in range(s):
        c += row[a]
    return c


@njit(cache=True, nogil=True, inline="always")
def _total(row):
    c = 0
    for a in range(len(row)):
        c += row[a]
    return c


@njit(cache=True, nogil=True)
def _find(row, target):
    s = 0
    cum = 0
    while cum + row[s] <= target:
        cum += row[s]
        s += 1
    return s, cum


@njit(cache=True, nogil=True)
def _code(codes, n, width, P, t16, t8, ln, payload, decode, stats, sel_trace):
    """Shared encode/decode loop.  ``stats``: [selector micro-bits, blocks,
    count writes, count writes at unknown positions]."""
    M = P.shape[0]
    H = np.zeros(M, dtype=np.int64)
    R = np.zeros(M, dtype=np.int64)
    n_sel_ctx = M ** SELECTOR_ORDER
    sel = np.ones((n_sel_ctx, M), dtype=np.int64)
    zmod = np.ones(2, dtype=np.int64)
    gate = np.ones((2, 2), dtype=np.int64)
    vmod = np.ones((N_UNKNOWN + 1, N_UNKNOWN), dtype=np.int64)
    costs = np.zeros(M, dtype=np.int64)
    f = np.empty(4, dtype=np.int64)
    writes = np.zeros(2, dtype=np.int64)
    if decode:
        st = range_decoder_state(payload)
        out = np.empty(1, dtype=np.uint8)
        res = np.empty(n, dtype=np.uint8)
    else:
        st = new_encoder_state()
        out = np.empty(n // 4 + 64, dtype=np.uint8)
        res = np.empty(1, dtype=np.uint8)
    sel_ctx = 0
    prev_u = 0
    prev_v = N_UNKNOWN
    sel_bits = 0.0
    nblocks = 0
    ok = True
    for lo in range(0, n, BLOCK):
        hi = min(n, lo + BLOCK)
        row = sel[sel_ctx]
        total = _total(row)
        if decode:
            target = range_decode_freq(st, total)
            if target < 0:
                ok = False
                break
            winner, cum = _find(row, target)
            range_decode_update(st, payload, cum, row[winner], total)
        else:
            _score(t16, t8, P, H, codes, lo, hi, width, ln, costs)
            winner = 0
            for m in range(1, M):
                if costs[m] < costs[winner]:
                    winner = m
            out = range_encode(st, out, _cum(row, winner), row[winner], total)
        sel_bits += -math.log2(row[winner] / total)
        sel_trace[nblocks] = winner
        nblocks += 1
        row[winner] += 1
        if total + 1 > SELECTOR_LIMIT:
            for a in range(M):
                row[a] = (row[a] + 1) >> 1
        sel_ctx = (sel_ctx * M + winner) % n_sel_ctx

        z = 0
        if width == 4:
            if decode:
                target = range_decode_freq(st, _total(zmod))
                if target < 0:
                    ok = False
                    break
                z, cum = _find(zmod, target)
                range_decode_update(st, payload, cum, zmod[z], _total(zmod))
            else:
                for t in range(lo, hi):
                    if codes[t] >= 4:
                        z = 1
                        break
                out = range_encode(st, out, _cum(zmod, z), zmod[z], _total(zmod))
            _small_adapt(zmod, z, SMALL_INC, SMALL_LIMIT)

        for t in range(lo, hi):
            unknown = 0
            if z:
                g = gate[prev_u]
                if decode:
                    target = range_decode_freq(st, _total(g))
                    if target < 0:
                        ok = False
                        break
                    unknown, cum = _find(g, target)
                    range_decode_update(st, payload, cum, g[unknown], _total(g))
                else:
                    unknown = 1 if codes[t] >= 4 else 0
                    out = range_encode(st, out, _cum(g, unknown), g[unknown], _total(g))
                _small_adapt(g, unknown, SMALL_INC, SMALL_LIMIT)
                prev_u = unknown
            if unknown:
                vr = vmod[prev_v]
                if decode:
                    target = range_decode_freq(st, _total(vr))
                    if target < 0:
                        ok = False
                        break
                    v, cum = _find(vr, target)
                    range_decode_update(st, payload, cum, vr[v], _total(vr))
                    res[t] = 4 + v
                else:
                    v = codes[t] - 4
                    out = range_encode(st, out, _cum(vr, v), vr[v], _total(vr))
                _small_adapt(vr, v, SMALL_INC, SMALL_LIMIT)
                prev_v = v
                w0 = writes[0]
                _observe(t16, t8, P, H, R, 0, True, winner, writes)
                writes[1] += writes[0] - w0
                continue
            ftot = _freqs(t16, t8, P, winner, H[winner], f)
            ftot = _scaled_total(f, 4)
            if decode:
                target = range_decode_freq(st, ftot)
                if target < 0:
                    ok = False
                    break
                x, cum = _find(f, target)
                range_decode_update(st, payload, cum, f[x], ftot)
                res[t] = x
            else:
                x = codes[t]
                out = range_encode(st, out, _cum(f, x), f[x], ftot)
            _observe(t16, t8, P, H, R, x, False, winner, writes)
        if not ok:
            break
    stats[0] = sel_bits
    stats[1] = nblocks
    stats[2] = writes[0]
    stats[3] = writes[1]
    if decode:
        return res, ok
    out = range_flush(st, out)
    return out[:st[OUT_POS]], ok


@dataclass
class MixStats:
    selector_bits: float
    blocks: int
    count_writes: int
    unknown_count_writes: int
    choices: np.ndarray

    @property
    def selector_bits_per_block(self) -> float:
        return self.selector_bits / self.blocks if self.blocks else 0.0


class ExpertBank:
    """Expert count tables and contexts for one profile.

    Tables are zero-initialised with ``np.zeros`` so untouched pages of the
    large deep-order tables are never materialised.
    """

    def __init__(self, profile="lite"):
        if isinstance(profile, str):
            profile = PROFILES[profile][1]
        self.profile = tuple(profile)
        self.P, n16, n8 = param_matrix(self.profile)
        self.t16 = np.zeros(max(n16, 1), dtype=np.uint16)
        self.t8 = np.zeros(max(n8, 1), dtype=np.uint8)
        self.H = np.zeros(len(self.profile), dtype=np.int64)
        self.R = np.zeros(len(self.profile), dtype=np.int64)
        self._writes = np.zeros(2, dtype=np.int64)

    @property
    def n_experts(self) -> int:
        return len(self.profile)

    def counts(self, m: int, h: int | None = None) -> list[int]:
        h = int(self.H[m]) if h is None else h
        bits, off = int(self.P[m, P_BITS]), int(self.P[m, P_OFF])
        return [int(_get(self.t16, self.t8, bits, off, h * 4 + a)) for a in range(4)]

    def predict_symbol(self, m: int, s: int) -> tuple[int, int]:
        f, total = frequencies(self.counts(m), self.profile[m].alpha)
        return f[s], total

    def score_block(self, block, width: int = 2) -> np.ndarray:
        codes = np.asarray(block, dtype=np.uint8)
        costs = np.zeros(self.n_experts, dtype=np.int64)
        _score(self.t16, self.t8, self.P, self.H.copy(), codes, 0, len(codes), width, LN, costs)
        return costs

    def observe(self, x: int, winner: int, unknown: bool = False) -> None:
        _observe(self.t16, self.t8, self.P, self.H, self.R, x, unknown, winner, self._writes)

    def snapshot(self) -> tuple[bytes, bytes]:
        return self.t16.tobytes(), self.t8.tobytes()


def table_bytes(profile) -> list[int]:
    if isinstance(profile, str):
        profile = PROFILES[profile][1]
    return [e.table_bytes for e in profile]


def _run(codes, n, width, bank, payload, decode):
    stats = np.zeros(4, dtype=np.float64)
    trace = np.zeros(-(-n // BLOCK) + 1, dtype=np.int64)
    res, ok = _code(codes, n, width, bank.P, bank.t16, bank.t8, LN, payload, decode, stats, trace)
    blocks = int(stats[1])
    return res, ok, MixStats(float(stats[0]), blocks, int(stats[2]), int(stats[3]), trace[:blocks])


def encode(codes, width: int, profile: str = "lite", *, return_bank: bool = False):
    """Encode nucleotide codes (0..3, or 0..15 in 4-bit mode).

    Returns ``(payload, stats)``, plus the final bank with ``return_bank``.
    """
    if width not in (2, 4):
        raise ValueError("width must be 2 or 4")
    pid = PROFILES[profile][0]
    codes = np.ascontiguousarray(codes, dtype=np.uint8)
    if len(codes) and int(codes.max()) >= (4 if width == 2 else 16):
        raise ValueError(f"symbol code out of range for {width}-bit mode")
    bank = ExpertBank(profile)
    head = bytes([pid, width]) + encode_varint(len(codes))
    body, _, stats = _run(codes, len(codes), width, bank, np.empty(1, dtype=np.uint8), False)
    payload = head + body.tobytes()
    return (payload, stats, bank) if return_bank else (payload, stats)


def decode(payload: bytes, *, return_bank: bool = False, expected_n: int | None = None):
    rd = Reader(payload)
    pid = rd.u8()
    width = rd.u8()
    n = rd.varint()
    if expected_n is not None and n != expected_n:
        raise CorruptPayload(f"payload declares {n} symbols, expected {expected_n}")
    if pid not in PROFILE_BY_ID:
        raise CorruptPayload(f"unknown markov-mix profile id {pid}")
    if width not in (2, 4):
        raise CorruptPayload(f"bad markov-mix width {width}")
    bank = ExpertBank(PROFILE_BY_ID[pid][0])
    body = np.frombuffer(bytes(payload[rd.pos:]), dtype=np.uint8)
    res, ok, _ = _run(np.empty(1, dtype=np.uint8), n, width, bank, body, True)
    if not ok:
        raise CorruptPayload("markov-mix payload left the coding interval")
    return (res, width, bank) if return_bank else (res, width)
