"""Lossless compression of FASTA/FASTQ files by semantic stream factorization."""

from __future__ import annotations

__version__ = "0.1.0"

from .container import CodecConfig, ContainerReader, compress_file, decompress_file
from .errors import StrandpackError
from .referential import diff_container, reconstruct

__all__ = [
    "CodecConfig", "ContainerReader", "StrandpackError", "compress_file", "decompress_file",
    "diff_container", "reconstruct", "__version__",
]
