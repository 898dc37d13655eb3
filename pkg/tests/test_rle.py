import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eqsim.codec import MAX_OVERHEAD, RleDecodeError, rle_compress, rle_decompress


def test_empty_input_is_empty_output():
    assert rle_compress(b"") == b""
    assert rle_decompress(b"") == b""


def test_zero_kilobyte_compresses_to_a_few_bytes():
    comp = rle_compress(bytes(1024))
    assert len(comp) <= 16
    assert rle_decompress(comp) == bytes(1024)


def test_three_quarters_zero_buffer_ratio():
    # contiguous zero stretches with random blocks between, 75/25
    rng = np.random.default_rng(3)
    parts = []
    for _ in range(16):
        parts.append(bytes(3 * 1024))
        parts.append(rng.integers(0, 256, 1024, dtype=np.uint8).tobytes())
    buf = b"".join(parts)
    comp = rle_compress(buf)
    assert len(comp) / len(buf) <= 0.35
    assert rle_decompress(comp) == buf


@given(st.binary(max_size=4096))
def test_roundtrip_arbitrary(data):
    assert rle_decompress(rle_compress(data)) == data


@given(st.binary(max_size=4096))
def test_expansion_bound(data):
    assert len(rle_compress(data)) <= len(data) + MAX_OVERHEAD


@pytest.mark.parametrize("size", [1, 7, 8, 9, 63, 64, 65, 1 << 20])
def test_roundtrip_random_sizes(size):
    rng = np.random.default_rng(size)
    data = rng.integers(0, 256, size, dtype=np.uint8).tobytes()
    assert rle_decompress(rle_compress(data)) == data


def test_roundtrip_runs_crossing_pad():
    for tail in range(1, 9):
        data = b"\xab" * 333 + b"\x00" * (64 + tail)
        assert rle_decompress(rle_compress(data)) == data


def test_word_aligned_runs_compress():
    data = b"\x11\x22\x33\x44\x55\x66\x77\x88" * 4096  # one 32 KiB word run
    comp = rle_compress(data)
    assert len(comp) <= 32
    assert rle_decompress(comp) == data


def test_truncation_raises_with_offset():
    comp = rle_compress(bytes(100) + b"xyz" * 50)
    for cut in range(1, len(comp)):
        truncated = comp[:cut]
        try:
            result = rle_decompress(truncated)
        except RleDecodeError as err:
            assert err.offset >= 0
        else:
            # crc makes a silently-valid truncation astronomically unlikely
            pytest.fail(f"truncation at {cut} decoded to {len(result)} bytes")


def test_corruption_never_silently_wrong():
    rng = random.Random(7)
    base = bytes(rng.randrange(256) if rng.random() < 0.4 else 0 for _ in range(2048))
    comp = bytearray(rle_compress(base))
    for _ in range(300):
        pos = rng.randrange(len(comp))
        bit = 1 << rng.randrange(8)
        comp[pos] ^= bit
        try:
            decoded = rle_decompress(bytes(comp))
        except RleDecodeError:
            pass
        else:
            assert decoded == base
        comp[pos] ^= bit
