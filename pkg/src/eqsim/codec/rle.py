"""Word-oriented run-length codec.

The encoder works on 64-bit words so that scanning and expansion are a
handful of vectorized numpy passes.  Compressed layout:

    block*  crc32(u32 LE, over the uncompressed bytes)

Each block starts with a control word (u64 LE):

    bits 0..1   kind: 0 = literal, 1 = run, 2 = zero run
    bits 2..4   pad bytes (0..7), meaningful only in the final block
    bits 5..63  word count (>= 1)

A literal block is followed by `count` raw words, a run block by a single
value word repeated `count` times, a zero run by nothing.  The input is
zero-padded to a word multiple; `pad` bytes are trimmed from the decoded
tail.  Empty input encodes to empty output.

Runs are only taken when they pay for their own header (>= 3 equal words,
or >= 2 zero words), so literal stretches are maximal and the worst case
is bounded: len(compress(x)) <= len(x) + 20 bytes.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

_KIND_LITERAL = 0
_KIND_RUN = 1
_KIND_ZERO = 2

_WORD = 8
_MIN_RUN = 3       # equal words needed before a run block wins
_MIN_ZERO_RUN = 2  # zero runs have no value word, so they pay off earlier

# worst case: one literal control word + final-word padding + crc
MAX_OVERHEAD = 8 + 7 + 4


class RleDecodeError(ValueError):
    """Corrupt or truncated RLE data; `offset` is the failing byte position."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at compressed offset {offset})")
        self.offset = offset


def _control(kind: int, count: int, pad: int = 0) -> bytes:
    return struct.pack("<Q", kind | (pad << 2) | (count << 5))


def compress(data: bytes) -> bytes:
    if len(data) == 0:
        return b""

    pad = (-len(data)) % _WORD
    if pad:
        padded = data + b"\x00" * pad
    else:
        padded = bytes(data)
    words = np.frombuffer(padded, dtype="<u8")
    n = len(words)

    # run starts and lengths
    if n > 1:
        change = np.flatnonzero(words[1:] != words[:-1]) + 1
        starts = np.concatenate(([0], change))
    else:
        starts = np.zeros(1, dtype=np.intp)
    lengths = np.diff(np.append(starts, n))
    values = words[starts]

    worthwhile = (lengths >= _MIN_RUN) | ((values == 0) & (lengths >= _MIN_ZERO_RUN))
    run_idx = np.flatnonzero(worthwhile)

    out = []
    ctrl_at = 0    # index in `out` of the latest control word
    lit_start = 0  # word index where the pending literal stretch begins
    for i in run_idx:
        s = int(starts[i])
        if s > lit_start:
            ctrl_at = len(out)
            out.append(_control(_KIND_LITERAL, s - lit_start))
            out.append(padded[lit_start * _WORD : s * _WORD])
        count = int(lengths[i])
        ctrl_at = len(out)
        if values[i] == 0:
            out.append(_control(_KIND_ZERO, count))
        else:
            out.append(_control(_KIND_RUN, count))
            out.append(padded[s * _WORD : (s + 1) * _WORD])
        lit_start = s + count
    if lit_start < n:
        ctrl_at = len(out)
        out.append(_control(_KIND_LITERAL, n - lit_start))
        out.append(padded[lit_start * _WORD :])

    if pad:
        word = struct.unpack("<Q", out[ctrl_at])[0]
        out[ctrl_at] = struct.pack("<Q", word | (pad << 2))

    out.append(struct.pack("<I", zlib.crc32(data)))
    return b"".join(out)


def decompress(data: bytes) -> bytes:
    if len(data) == 0:
        return b""
    if len(data) < 12:  # one control word + crc at minimum
        raise RleDecodeError("compressed data shorter than minimal frame", 0)

    body, crc_bytes = data[:-4], data[-4:]
    expected_crc = struct.unpack("<I", crc_bytes)[0]

    parts = []
    pos = 0
    pad = 0
    end = len(body)
    while pos < end:
        if end - pos < 8:
            raise RleDecodeError("truncated control word", pos)
        word = struct.unpack_from("<Q", body, pos)[0]
        kind = word & 3
        pad = (word >> 2) & 7
        count = word >> 5
        pos += 8
        if count == 0:
            raise RleDecodeError("zero-length block", pos - 8)
        if kind == _KIND_LITERAL:
            nbytes = count * _WORD
            if end - pos < nbytes:
                raise RleDecodeError("truncated literal block", pos)
            parts.append(body[pos : pos + nbytes])
            pos += nbytes
        elif kind == _KIND_RUN:
            if end - pos < 8:
                raise RleDecodeError("truncated run value", pos)
            parts.append(body[pos : pos + 8] * count)
            pos += 8
        elif kind == _KIND_ZERO:
            parts.append(b"\x00" * (count * _WORD))
        else:
            raise RleDecodeError("invalid block kind", pos - 8)

    result = b"".join(parts)
    if pad:
        tail = result[-pad:]
        if tail.count(0) != pad:
            raise RleDecodeError("nonzero padding", len(body))
        result = result[:-pad]
    if zlib.crc32(result) != expected_crc:
        raise RleDecodeError("checksum mismatch", len(body))
    return result
