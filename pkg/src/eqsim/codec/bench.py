"""Compression engine micro-benchmark.

Ratios are deterministic per corpus; throughput is the median of several
timed passes so one scheduler hiccup does not skew a row.  Engines that
raise are reported as failed rows rather than aborting the table.
"""

from __future__ import annotations

import statistics
import time
from typing import Optional, Sequence

import numpy as np

from .engines import CompressorInfo, CompressionEngine, registered_engines


def builtin_corpus(kind: str, buffers: int = 8, size: int = 256 * 1024, seed: int = 0) -> list[bytes]:
    """Synthetic corpora: 'zero', 'random', or 'sparse' (a mostly-empty volume)."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(buffers):
        if kind == "zero":
            out.append(bytes(size))
        elif kind == "random":
            out.append(rng.integers(0, 256, size, dtype=np.uint8).tobytes())
        elif kind == "sparse":
            buf = np.zeros(size, dtype=np.uint8)
            # low-entropy blobs over empty space, like a sparse density volume:
            # run length removes the blank space, dictionary coders also squeeze
            # the blob content
            for _ in range(12):
                start = int(rng.integers(0, size - size // 64))
                length = int(rng.integers(size // 256, size // 64))
                buf[start : start + length] = rng.integers(1, 7, length, dtype=np.uint8)
            out.append(buf.tobytes())
        else:
            raise ValueError(f"unknown builtin corpus {kind!r}")
    return out


def codec_benchmark(
    corpus: Sequence[bytes],
    engines: Optional[Sequence[CompressionEngine]] = None,
    runs: int = 3,
) -> list[CompressorInfo]:
    if not corpus:
        raise ValueError("empty corpus")
    if runs < 3:
        raise ValueError("need at least 3 timing runs for a stable median")
    engines = list(engines) if engines is not None else registered_engines()
    raw_bytes = sum(len(b) for b in corpus)

    rows = []
    for engine in engines:
        info = CompressorInfo(name=engine.name)
        try:
            compressed = [engine.compress(b) for b in corpus]
            for original, comp in zip(corpus, compressed):
                if engine.decompress(comp) != original:
                    raise ValueError("round-trip mismatch")
        except Exception as exc:
            info.failed = True
            info.error = str(exc)
            rows.append(info)
            continue

        info.ratio = sum(len(c) for c in compressed) / raw_bytes

        ctimes, dtimes = [], []
        for _ in range(runs):
            t0 = time.perf_counter()
            for b in corpus:
                engine.compress(b)
            ctimes.append(time.perf_counter() - t0)
            t0 = time.perf_counter()
            for c in compressed:
                engine.decompress(c)
            dtimes.append(time.perf_counter() - t0)
        mb = raw_bytes / 1e6
        info.compress_mbps = mb / statistics.median(ctimes)
        info.decompress_mbps = mb / statistics.median(dtimes)
        rows.append(info)
    return rows
