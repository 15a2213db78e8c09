"""Exception hierarchy.

Every data error carries a short machine-parsable ``category`` string that the
command-line frontend prints on failure.
"""

from __future__ import annotations


class StrandpackError(Exception):
    category = "error"


class MalformedRecord(StrandpackError):
    category = "malformed-record"


class UnknownFormat(StrandpackError):
    category = "unknown-format"


class NonCanonicalLineEnding(StrandpackError):
    category = "non-canonical-line-ending"


class InconsistentStreams(StrandpackError):
    category = "inconsistent-streams"


class CorruptExtra(StrandpackError):
    category = "corrupt-extra"


class BlockTooLarge(StrandpackError):
    category = "block-too-large"


class CorruptBlock(StrandpackError):
    category = "corrupt-block"


class ChunkSizeMismatch(StrandpackError):
    category = "chunk-size-mismatch"


class CorruptPayload(StrandpackError):
    category = "corrupt-payload"


class ChecksumMismatch(StrandpackError):
    category = "checksum-mismatch"

    def __init__(self, stream: str, block: int):
        super().__init__(f"checksum mismatch in stream {stream} block {block}")
        self.stream = stream
        self.block = block


class UnknownCodec(StrandpackError):
    category = "unknown-codec"


class TruncatedContainer(StrandpackError):
    category = "truncated-container"


class RangeOutOfBounds(StrandpackError):
    category = "range-out-of-bounds"


class CorruptScript(StrandpackError):
    category = "corrupt-script"


class ReferenceMismatch(StrandpackError):
    category = "reference-mismatch"
