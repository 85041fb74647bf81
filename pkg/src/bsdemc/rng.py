"""Counter-based random number generation (Philox4x32-10).

Every variate is a pure function of (seed, stream, path index, position),
so path batches can be generated in any chunking / worker layout and still
come out bitwise identical.  This is deliberately not numpy's Generator API:
we need to address the stream of an individual path directly.
"""

import numpy as np
from scipy.special import ndtri

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)

# stream tags, one per kind of draw an engine run can make
STREAM_BROWNIAN = 1
STREAM_JUMP_TIMES = 2
STREAM_MARKS = 3


def _splitmix64(x: int) -> int:
    """Finalizer from SplitMix64; used only to derive per-stream keys."""
    x = (x + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return x ^ (x >> 31)


def stream_key(seed: int, stream: int) -> tuple[int, int]:
    """Derive the 2x32-bit Philox key for a (seed, stream) pair."""
    mixed = _splitmix64((int(seed) & 0xFFFFFFFFFFFFFFFF) ^ _splitmix64(stream))
    return mixed & 0xFFFFFFFF, mixed >> 32


def philox4x32(c0, c1, c2, c3, k0: int, k1: int):
    """One batch of Philox4x32-10 blocks.

    Counter words are uint64 arrays holding 32-bit values; returns the four
    32-bit output words (as uint64 arrays).  Matches the Random123 reference
    test vectors.
    """
    c0 = c0.astype(np.uint64, copy=True)
    c1 = c1.astype(np.uint64, copy=True)
    c2 = c2.astype(np.uint64, copy=True)
    c3 = c3.astype(np.uint64, copy=True)
    k0 = np.uint64(k0)
    k1 = np.uint64(k1)
    for _ in range(10):
        p0 = _M0 * c0
        p1 = _M1 * c2
        hi0 = p0 >> _SHIFT32
        lo0 = p0 & _MASK32
        hi1 = p1 >> _SHIFT32
        lo1 = p1 & _MASK32
        c0 = hi1 ^ c1 ^ k0
        c1 = lo1
        c2 = hi0 ^ c3 ^ k1
        c3 = lo0
        k0 = (k0 + _W0) & _MASK32
        k1 = (k1 + _W1) & _MASK32
    return c0, c1, c2, c3


def _blocks_to_uniforms(c0, c1, c2, c3):
    """Two doubles in (0, 1) per 128-bit block, 53 significant bits each."""
    u0 = (c0 << _SHIFT32) | c1
    u1 = (c2 << _SHIFT32) | c3
    scale = 2.0 ** -53
    a = ((u0 >> np.uint64(11)).astype(np.float64) + 0.5) * scale
    b = ((u1 >> np.uint64(11)).astype(np.float64) + 0.5) * scale
    return a, b


def uniforms(seed: int, stream: int, path_ids: np.ndarray, count: int) -> np.ndarray:
    """(len(path_ids), count) uniforms on (0,1), addressed per path.

    Column j of path p depends only on (seed, stream, p, j): requesting a
    larger ``count`` later reproduces the earlier columns bit for bit.
    """
    path_ids = np.asarray(path_ids, dtype=np.uint64)
    npaths = path_ids.shape[0]
    if count == 0:
        return np.empty((npaths, 0))
    nblocks = (count + 1) // 2
    block = np.arange(nblocks, dtype=np.uint64)
    c0 = np.broadcast_to(block, (npaths, nblocks)).ravel()
    c1 = np.zeros(npaths * nblocks, dtype=np.uint64)
    c2 = np.repeat(path_ids & _MASK32, nblocks)
    c3 = np.repeat(path_ids >> _SHIFT32, nblocks)
    k0, k1 = stream_key(seed, stream)
    o0, o1, o2, o3 = philox4x32(c0, c1, c2, c3, k0, k1)
    a, b = _blocks_to_uniforms(o0, o1, o2, o3)
    out = np.empty((npaths, 2 * nblocks))
    out[:, 0::2] = a.reshape(npaths, nblocks)
    out[:, 1::2] = b.reshape(npaths, nblocks)
    return out[:, :count]


def gaussians(seed: int, stream: int, path_ids: np.ndarray, count: int) -> np.ndarray:
    """Standard normals via the inverse CDF, same addressing as `uniforms`."""
    return ndtri(uniforms(seed, stream, path_ids, count))
