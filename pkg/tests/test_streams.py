import struct
import sys

import pytest
from hypothesis import given
from hypothesis import strategies as st

from eqsim.codec import (
    InputStream,
    OutputStream,
    StreamClosedError,
    UnderflowError,
    get_engine,
)


def roundtrip(data: bytes, chunk_size: int, engine=None) -> bytes:
    chunks = []
    out = OutputStream(chunks.append, chunk_size=chunk_size, engine=engine)
    out.write(data)
    out.flush()
    ins = InputStream(chunks)
    return ins.read(len(data))


def test_write_zero_bytes_emits_nothing():
    chunks = []
    out = OutputStream(chunks.append, chunk_size=4096)
    out.write(b"")
    out.flush()
    assert chunks == []


def test_chunk_count_at_threshold():
    chunks = []
    out = OutputStream(chunks.append, chunk_size=4096)
    out.write(bytes(10000))
    assert len(chunks) == 2  # two full chunks during write
    out.flush()
    assert len(chunks) == 3  # remainder on flush
    payload_sizes = [len(c) - 5 for c in chunks]
    assert payload_sizes == [4096, 4096, 10000 - 2 * 4096]


@pytest.mark.parametrize("chunk_size", [64, 4096, 65536])
@pytest.mark.parametrize("engine_name", [None, "rle", "fast", "ratio"])
def test_chunk_stream_equivalence(chunk_size, engine_name):
    engine = get_engine(engine_name) if engine_name else None
    import numpy as np

    data = np.random.default_rng(chunk_size).integers(0, 8, 200_000, dtype=np.uint8).tobytes()
    assert roundtrip(data, chunk_size, engine) == data


def test_read_zero():
    ins = InputStream([])
    assert ins.read(0) == b""


def test_read_past_end_raises():
    chunks = []
    out = OutputStream(chunks.append, chunk_size=64)
    out.write(b"hello")
    out.flush()
    ins = InputStream(chunks)
    assert ins.read(5) == b"hello"
    with pytest.raises(UnderflowError):
        ins.read(1)


def test_sink_failure_makes_stream_unusable():
    def sink(chunk):
        raise IOError("sink gone")

    out = OutputStream(sink, chunk_size=4)
    with pytest.raises(IOError):
        out.write(bytes(8))
    with pytest.raises(StreamClosedError):
        out.write(b"x")


def test_big_endian_u32_identity():
    # a big-endian writer stored 0x01020304; reader returns the same value
    chunks = []
    out = OutputStream(chunks.append, endianness="big")
    out.write_u32(0x01020304)
    out.flush()
    raw = InputStream(list(chunks))
    assert raw.read(4) == b"\x01\x02\x03\x04"
    ins = InputStream(chunks, remote_endianness="big")
    assert ins.read_u32() == 0x01020304
    assert ins.swaps == (sys.byteorder == "little")


PRIMS = [
    ("u8", st.integers(0, 2**8 - 1)),
    ("u16", st.integers(0, 2**16 - 1)),
    ("u32", st.integers(0, 2**32 - 1)),
    ("u64", st.integers(0, 2**64 - 1)),
    ("i32", st.integers(-(2**31), 2**31 - 1)),
    ("i64", st.integers(-(2**63), 2**63 - 1)),
    ("f32", st.floats(width=32, allow_nan=False)),
    ("f64", st.floats(allow_nan=False)),
]


@given(
    st.lists(
        st.sampled_from(range(len(PRIMS))).flatmap(
            lambda i: st.tuples(st.just(PRIMS[i][0]), PRIMS[i][1])
        ),
        min_size=1,
        max_size=50,
    ),
    st.sampled_from(["little", "big"]),
)
def test_primitive_roundtrip_across_endianness(values, endianness):
    chunks = []
    out = OutputStream(chunks.append, chunk_size=32, endianness=endianness)
    for kind, v in values:
        getattr(out, f"write_{kind}")(v)
    out.flush()
    ins = InputStream(chunks, remote_endianness=endianness)
    for kind, v in values:
        assert getattr(ins, f"read_{kind}")() == v


def test_reference_encoder_oracle():
    # independent encoder: plain struct packing in big-endian order
    import random

    rng = random.Random(42)
    values = [rng.getrandbits(32) for _ in range(1000)]
    blob = b"".join(struct.pack(">I", v) for v in values)
    chunks = []
    out = OutputStream(chunks.append, chunk_size=512)
    out.write(blob)
    out.flush()
    ins = InputStream(chunks, remote_endianness="big")
    assert [ins.read_u32() for _ in values] == values


def test_string_roundtrip():
    chunks = []
    out = OutputStream(chunks.append)
    out.write_string("compound tree")
    out.write_string("")
    out.flush()
    ins = InputStream(chunks)
    assert ins.read_string() == "compound tree"
    assert ins.read_string() == ""
