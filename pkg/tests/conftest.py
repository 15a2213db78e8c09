from __future__ import annotations

import gzip
import random
from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest

DATA = Path(__file__).parent / "data"
ECOLI = DATA / "ecoli_k12_w3110.fasta.gz"


@lru_cache(maxsize=1)
def ecoli_bytes() -> bytes:
    with gzip.open(ECOLI, "rb") as fh:
        return fh.read()


def naive_bwt(s: bytes) -> tuple[bytes, int]:
    """Sorted-rotation oracle: last column and first row holding the input."""
    n = len(s)
    rots = sorted(range(n), key=lambda i: s[i:] + s[:i])
    last = bytes(s[(i - 1) % n] for i in rots)
    primary = next(r for r, i in enumerate(rots) if s[i:] + s[:i] == s)
    return last, primary


def wrap(seq: str, width: int) -> str:
    return "".join(seq[i:i + width] + "\n" for i in range(0, len(seq), width))


def random_fasta(rng: random.Random, n_records: int, max_len: int = 400,
                 alphabet: str = "ACGTacgtN") -> bytes:
    parts = []
    for i in range(n_records):
        seq = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, max_len)))
        parts.append(f">rec{i} len={len(seq)}\n" + wrap(seq, rng.choice([60, 70, 80])))
    return "".join(parts).encode()


def random_fastq(rng: random.Random, n_records: int, max_len: int = 150) -> bytes:
    parts = []
    for i in range(n_records):
        n = rng.randint(0, max_len)
        seq = "".join(rng.choice("ACGTN") for _ in range(n))
        qual = "".join(chr(33 + rng.randint(0, 40)) for _ in range(n))
        sep = rng.choice(["+", f"+read{i}"])
        header = f"read{i}" if sep == "+" or rng.random() < 0.5 else f"read{i} extra"
        if sep != "+":
            sep = "+" + header if rng.random() < 0.5 else sep
        parts.append(f"@{header}\n{seq}\n{sep}\n{qual}\n")
    return "".join(parts).encode()


def iid_acgt(n: int, seed: int = 0) -> bytes:
    rng = np.random.default_rng(seed)
    return np.frombuffer(b"ACGT", dtype=np.uint8)[rng.integers(0, 4, n)].tobytes()


@pytest.fixture
def rng() -> random.Random:
    return random.Random(12345)


def pytest_terminal_summary(terminalreporter):
    lines = []
    for key in ("passed", "failed"):
        for rep in terminalreporter.stats.get(key, []):
            if rep.when != "call":
                continue
            lines += [value for name, value in rep.user_properties if name == "acceptance"]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
