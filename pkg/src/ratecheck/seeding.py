"""Reproducible random number generation.

Every stream in the package is a Philox 4x64 counter-based generator keyed
through ``numpy.random.SeedSequence``.  Philox streams are platform-stable,
so datasets, index sequences, and sweep cells replay bit-exactly from their
integer seeds.  Child streams are derived with ``spawn_key`` tuples rather
than by drawing from a parent, which keeps every cell independent of
execution order.
"""

from __future__ import annotations

import numpy as np

# SGD index sequences are drawn in fixed-size chunks so that arbitrarily long
# runs never materialize the full sequence.  The chunk size is part of the
# reproducibility contract: changing it changes the streams.
INDEX_CHUNK = 1_000_000


def generator(seed: int, *key: int) -> np.random.Generator:
    """Philox generator for ``seed`` refined by an optional spawn key."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def child_seed(seed: int, *key: int) -> int:
    """Stable derived integer seed (for APIs that take an int seed)."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def index_stream(seed: int, n: int, t0: int, t1: int) -> np.ndarray:
    """Uniform indices j_t in [0, n) for steps t0 <= t < t1 (0-based).

    The stream is chunked on fixed ``INDEX_CHUNK`` boundaries; chunk c uses
    its own child generator, so any window of steps can be regenerated
    without replaying the prefix.
    """
    if t1 <= t0:
        return np.empty(0, dtype=np.int64)
    out = np.empty(t1 - t0, dtype=np.int64)
    pos = 0
    c0, c1 = t0 // INDEX_CHUNK, (t1 - 1) // INDEX_CHUNK
    for c in range(c0, c1 + 1):
        lo, hi = c * INDEX_CHUNK, (c + 1) * INDEX_CHUNK
        a, b = max(t0, lo) - lo, min(t1, hi) - lo
        # Philox draws are prefix-stable, so only the first b values of the
        # chunk's stream are ever generated
        block = generator(seed, 0x1D, c).integers(0, n, size=b)
        out[pos : pos + (b - a)] = block[a:b]
        pos += b - a
    return out
