"""Counter-based random streams.

Draw ``t`` of stream ``(seed, stream_id)`` is a pure function of the triple.
The generator is Philox4x64-10 keyed by ``(seed, stream_id)``; the output
stream is bit-identical to ``numpy.random.Philox(key=[seed, stream_id])``,
which lets numba kernels and plain numpy code share replicates exactly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_MASK32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0

MASK64 = (1 << 64) - 1


@numba.njit(cache=True, inline="always")
def _mulhilo(a, b):
    a_lo = a & _MASK32
    a_hi = a >> _S32
    b_lo = b & _MASK32
    b_hi = b >> _S32
    ll = a_lo * b_lo
    lh = a_lo * b_hi
    hl = a_hi * b_lo
    hh = a_hi * b_hi
    mid = (ll >> _S32) + (lh & _MASK32) + (hl & _MASK32)
    hi = hh + (lh >> _S32) + (hl >> _S32) + (mid >> _S32)
    return hi, a * b


@numba.njit(cache=True)
def philox_block(c0, c1, c2, c3, k0, k1, out):
    """Philox4x64-10 on one counter; writes four words into ``out``."""
    for _ in range(10):
        hi0, lo0 = _mulhilo(_M0, c0)
        hi1, lo1 = _mulhilo(_M1, c2)
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
        k0 = k0 + _W0
        k1 = k1 + _W1
    out[0] = c0
    out[1] = c1
    out[2] = c2
    out[3] = c3


@numba.njit(cache=True)
def fill_uniforms(seed, stream, offset, out):
    """Write draws ``offset .. offset+len(out)-1`` of a stream as doubles in [0, 1).

    Block ``b`` uses counter ``b + 1`` (numpy's Philox increments before it
    generates), so draw ``t`` is word ``t % 4`` of block ``t // 4``.
    """
    buf = np.empty(4, dtype=np.uint64)
    m = out.shape[0]
    if m == 0:
        return
    block = offset // 4
    pos = offset % 4
    philox_block(np.uint64(block + 1), np.uint64(0), np.uint64(0), np.uint64(0),
                 seed, stream, buf)
    for i in range(m):
        if pos == 4:
            block += 1
            pos = 0
            philox_block(np.uint64(block + 1), np.uint64(0), np.uint64(0),
                         np.uint64(0), seed, stream, buf)
        out[i] = (buf[pos] >> _S11) * _INV53
        pos += 1


@dataclass(frozen=True)
class RngStream:
    """One replicate's random stream; ``seed`` and ``stream_id`` are 64-bit."""

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)):
                raise TypeError(f"{name} must be an integer, got {type(v).__name__}")
            object.__setattr__(self, name, int(v) & MASK64)

    def uniforms(self, count: int, offset: int = 0) -> np.ndarray:
        out = np.empty(int(count), dtype=np.float64)
        fill_uniforms(np.uint64(self.seed), np.uint64(self.stream_id), int(offset), out)
        return out

    def spawn(self, stream_id: int) -> "RngStream":
        return RngStream(self.seed, stream_id)
