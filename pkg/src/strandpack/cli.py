"""Command-line frontend."""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import dataclass

from . import __version__
from .container import CodecConfig, ContainerReader, DEFAULT_BLOCK_SIZE, compress_file
from .errors import StrandpackError
from .markov import PROFILES
from .referential import diff_container, reconstruct

NUC_CODECS = {"bwt": "bwt-cm", "mix": "markov-mix", "lz": "lz-ext", "raw": "raw"}


@dataclass
class BenchReport:
    input_bytes: int
    output_bytes: int
    encode_ns_per_byte: float
    decode_ns_per_byte: float
    repeat: int

    @property
    def bpb(self) -> float:
        return 8 * self.output_bytes / self.input_bytes if self.input_bytes else 0.0

    def text(self) -> str:
        return (f"input {self.input_bytes} B, output {self.output_bytes} B, {self.bpb:.4f} bpb\n"
                f"encode {self.encode_ns_per_byte:.1f} ns/B, decode {self.decode_ns_per_byte:.1f} ns/B "
                f"(mean wall clock over {self.repeat} runs)")

    def machine(self) -> str:
        return "\n".join([
            f"input_bytes={self.input_bytes}",
            f"output_bytes={self.output_bytes}",
            f"bpb={self.bpb:.4f}",
            f"encode_ns_per_byte={self.encode_ns_per_byte:.3f}",
            f"decode_ns_per_byte={self.decode_ns_per_byte:.3f}",
            f"repeat={self.repeat}",
        ])


def parse_range(text: str) -> tuple[int, int]:
    sep = ":" if ":" in text else "-"
    try:
        lo, hi = (int(x) for x in text.split(sep, 1))
    except ValueError:
        raise argparse.ArgumentTypeError(f"range must look like START:END, got {text!r}") from None
    return lo, hi


def positive_int(text: str) -> int:
    value = int(text)
    if value <= 0:
        raise argparse.ArgumentTypeError("must be positive")
    return value


def _read(path: str) -> bytes:
    if path == "-":
        return sys.stdin.buffer.read()
    with open(path, "rb") as fh:
        return fh.read()


def _write(path: str | None, data: bytes) -> None:
    if path in (None, "-"):
        sys.stdout.buffer.write(data)
        sys.stdout.buffer.flush()
        return
    with open(path, "wb") as fh:
        fh.write(data)


def _config(args) -> CodecConfig:
    return CodecConfig(nuc=NUC_CODECS[args.nuc_codec], profile=args.profile,
                       block_size=args.block_size, threads=args.threads)


def _add_codec_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--nuc-codec", choices=sorted(NUC_CODECS), default="bwt")
    p.add_argument("--profile", choices=sorted(PROFILES), default="lite")
    p.add_argument("--block-size", type=positive_int, default=DEFAULT_BLOCK_SIZE)
    p.add_argument("--threads", type=positive_int, default=1)


def cmd_pack(args) -> int:
    _write(args.output, compress_file(_read(args.input), _config(args)))
    return 0


def cmd_unpack(args) -> int:
    _write(args.output, ContainerReader(_read(args.input)).decompress(threads=args.threads))
    return 0


def cmd_list(args) -> int:
    info = ContainerReader(_read(args.input)).describe()
    if args.json:
        print(json.dumps(info, indent=1))
        return 0
    print(f"original_size={info['original_size']} records={info['records']} "
          f"referential={int(info['referential'])}")
    roles = {0: "data", 1: "script", 2: "literals"}
    for s in info["streams"]:
        print(f"stream {s['stream']} role={roles.get(s['role'], s['role'])} codec={s['codec']} "
              f"params={s['params'] or '-'} blocks={len(s['blocks'])}")
        start = 0
        for i, (off, size, raw, digest) in enumerate(s["blocks"]):
            print(f"  block {i} raw=[{start},{start + raw}) offset={off} size={size} xxh64={digest}")
            start += raw
    return 0


def cmd_slice(args) -> int:
    lo, hi = args.range
    _write(args.output, ContainerReader(_read(args.input)).slice(args.record, lo, hi) + b"\n")
    return 0


def cmd_refpack(args) -> int:
    reference = _read(args.reference)
    blob = diff_container(reference, _read(args.input), _config(args),
                          reference_name=os.path.basename(args.reference))
    _write(args.output, blob)
    return 0


def cmd_refunpack(args) -> int:
    _write(args.output, reconstruct(_read(args.reference), _read(args.input), threads=args.threads))
    return 0


def run_bench(data: bytes, config: CodecConfig, repeat: int) -> BenchReport:
    enc = dec = 0.0
    blob = b""
    for _ in range(repeat):
        t0 = time.perf_counter()
        blob = compress_file(data, config)
        t1 = time.perf_counter()
        back = ContainerReader(blob).decompress(threads=config.threads)
        t2 = time.perf_counter()
        if back != data:
            raise StrandpackError("benchmark round-trip mismatch")
        enc += t1 - t0
        dec += t2 - t1
    n = max(1, len(data))
    return BenchReport(len(data), len(blob), 1e9 * enc / repeat / n, 1e9 * dec / repeat / n, repeat)


def cmd_bench(args) -> int:
    report = run_bench(_read(args.input), _config(args), args.repeat)
    print(report.text())
    print(report.machine())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="strandpack", description="Lossless FASTA/FASTQ compression.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pack", help="compress a FASTA/FASTQ file")
    p.add_argument("input")
    p.add_argument("-o", "--output")
    _add_codec_flags(p)
    p.set_defaults(func=cmd_pack)

    p = sub.add_parser("unpack", help="decompress a container")
    p.add_argument("input")
    p.add_argument("-o", "--output")
    p.add_argument("--threads", type=positive_int, default=1)
    p.set_defaults(func=cmd_unpack)

    p = sub.add_parser("list", help="print stream table and block index")
    p.add_argument("input")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_list)

    p = sub.add_parser("slice", help="extract part of one record")
    p.add_argument("input")
    p.add_argument("--record", type=int, required=True)
    p.add_argument("--range", type=parse_range, required=True, metavar="START:END")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_slice)

    p = sub.add_parser("refpack", help="compress against a reference file")
    p.add_argument("input")
    p.add_argument("--reference", required=True)
    p.add_argument("-o", "--output")
    _add_codec_flags(p)
    p.set_defaults(func=cmd_refpack)

    p = sub.add_parser("refunpack", help="rebuild a file from a referential container")
    p.add_argument("input")
    p.add_argument("--reference", required=True)
    p.add_argument("-o", "--output")
    p.add_argument("--threads", type=positive_int, default=1)
    p.set_defaults(func=cmd_refunpack)

    p = sub.add_parser("bench", help="report bpb and ns/B for one file")
    p.add_argument("input")
    p.add_argument("--repeat", type=positive_int, default=10)
    _add_codec_flags(p)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except StrandpackError as exc:
        print(f"error: {exc.category}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: io-error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
