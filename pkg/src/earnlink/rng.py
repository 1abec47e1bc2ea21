"""Counter-based random number generation with per-unit substreams.

Every draw is addressed by the triple (seed, unit, slot) and computed as a
pure function of that address with the Philox-4x32 block cipher (10 rounds).
Because no generator state is carried between calls, simulating units in any
order, in chunks, or in parallel yields bit-identical panels: reproducibility
holds by construction rather than by careful sequencing.

The 64-bit seed forms the Philox key; the 64-bit unit index and 64-bit slot
index form the 128-bit counter. One block yields one double-precision
uniform (the upper two output words are discarded, trading half the stream
for a stateless address scheme).
"""
from __future__ import annotations

import numpy as np
from scipy.special import ndtri

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = 0x9E3779B9
_W1 = 0xBB67AE85
_MASK32 = 0xFFFFFFFF
_MASK64 = 0xFFFFFFFFFFFFFFFF
_ROUNDS = 10
_SHIFT32 = np.uint64(32)

# Slot reserved for deriving child seeds; simulation code must not use it.
_SEED_DERIVATION_SLOT = _MASK64


def philox4x32(c0, c1, c2, c3, key0: int, key1: int):
    """Apply the 10-round Philox-4x32 network to parallel counter lanes.

    The counter words are uint32 arrays of a common shape; the key words are
    Python integers (one key per call, shared across lanes). Returns the four
    output words as uint32 arrays.
    """
    c0 = np.asarray(c0, dtype=np.uint32)
    c1 = np.asarray(c1, dtype=np.uint32)
    c2 = np.asarray(c2, dtype=np.uint32)
    c3 = np.asarray(c3, dtype=np.uint32)
    k0 = key0 & _MASK32
    k1 = key1 & _MASK32
    for rnd in range(_ROUNDS):
        if rnd:
            k0 = (k0 + _W0) & _MASK32
            k1 = (k1 + _W1) & _MASK32
        p0 = c0.astype(np.uint64) * _M0
        p1 = c2.astype(np.uint64) * _M1
        c0, c1, c2, c3 = (
            (p1 >> _SHIFT32).astype(np.uint32) ^ c1 ^ np.uint32(k0),
            p1.astype(np.uint32),
            (p0 >> _SHIFT32).astype(np.uint32) ^ c3 ^ np.uint32(k1),
            p0.astype(np.uint32),
        )
    return c0, c1, c2, c3


def _address(unit, slot):
    unit = np.asarray(unit, dtype=np.uint64)
    slot = np.asarray(slot, dtype=np.uint64)
    unit, slot = np.broadcast_arrays(unit, slot)
    c0 = (slot & np.uint64(_MASK32)).astype(np.uint32)
    c1 = (slot >> _SHIFT32).astype(np.uint32)
    c2 = (unit & np.uint64(_MASK32)).astype(np.uint32)
    c3 = (unit >> _SHIFT32).astype(np.uint32)
    return c0, c1, c2, c3


def raw_uint64(seed: int, unit, slot) -> np.ndarray:
    """Return the 64-bit output word addressed by (seed, unit, slot)."""
    seed = int(seed)
    if not 0 <= seed <= _MASK64:
        raise ValueError(f"seed must be a nonnegative 64-bit integer, got {seed}")
    c0, c1, c2, c3 = _address(unit, slot)
    o0, o1, _, _ = philox4x32(c0, c1, c2, c3, seed & _MASK32, seed >> 32)
    return o0.astype(np.uint64) | (o1.astype(np.uint64) << _SHIFT32)


def uniform(seed: int, unit, slot) -> np.ndarray:
    """Uniform(0, 1) doubles, strictly inside the open interval."""
    bits = raw_uint64(seed, unit, slot)
    return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def standard_normal(seed: int, unit, slot) -> np.ndarray:
    """Standard normal draws via the inverse normal CDF."""
    return ndtri(uniform(seed, unit, slot))


def derive_seed(seed: int, index: int) -> int:
    """Derive an independent child seed, e.g. one per Monte Carlo replication."""
    return int(raw_uint64(seed, np.uint64(index), _SEED_DERIVATION_SLOT)[()])
