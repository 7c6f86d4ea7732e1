"""Counter-based randomness streams.

Reproducibility contract: a stream is addressed by (seed, path) and an event
index k, and the mapping (seed, path, k) -> (edge word, uniform, exponential)
is a pure function.  Chains that must be coupled share one stream object and
therefore see identical (edge, uniform) sequences; independent replicas get
substreams with distinct paths, which live in disjoint key spaces.

The core is Philox4x32-10 with the standard round constants, evaluated in
vectorized numpy.  One 128-bit block is spent per event:

    word 0 -> edge index (scaled multiply, bias <= M * 2^-32)
    words 1-2 -> 53-bit uniform in [0, 1)
    word 3 -> uniform in (0, 1) -> Exp(1) waiting time

Counter words 0-1 hold the 64-bit event index; counter words 2-3 and the
64-bit key are derived from SHA-256 of (seed, path), so distinct paths give
unrelated blocks.  No compatibility with numpy's own Philox is claimed.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

__all__ = ["RandomnessStream", "philox4x32"]

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint32(0x9E3779B9)
_W1 = np.uint32(0xBB67AE85)

_U32 = np.uint32
_MASK32 = np.uint64(0xFFFFFFFF)


def philox4x32(c0, c1, c2, c3, k0, k1):
    """Run 10 Philox4x32 rounds on uint32 counter arrays; returns 4 uint32 arrays.

    All inputs broadcast against each other.
    """
    x0 = np.asarray(c0, dtype=_U32)
    x1 = np.asarray(c1, dtype=_U32)
    x2 = np.asarray(c2, dtype=_U32)
    x3 = np.asarray(c3, dtype=_U32)
    x0, x1, x2, x3 = np.broadcast_arrays(x0, x1, x2, x3)
    key0 = np.broadcast_to(np.asarray(k0, dtype=_U32), x0.shape).copy()
    key1 = np.broadcast_to(np.asarray(k1, dtype=_U32), x0.shape).copy()
    with np.errstate(over="ignore"):  # uint32 wraparound is the algorithm
        for _ in range(10):
            p0 = x0.astype(np.uint64) * _M0
            p1 = x2.astype(np.uint64) * _M1
            hi0 = (p0 >> np.uint64(32)).astype(_U32)
            lo0 = (p0 & _MASK32).astype(_U32)
            hi1 = (p1 >> np.uint64(32)).astype(_U32)
            lo1 = (p1 & _MASK32).astype(_U32)
            x0, x1, x2, x3 = hi1 ^ x1 ^ key0, lo1, hi0 ^ x3 ^ key1, lo0
            key0 = key0 + _W0
            key1 = key1 + _W1
    return x0, x1, x2, x3


def _derive_words(seed: int, path: tuple) -> tuple[int, int, int, int]:
    # 128 key/stream bits from a stable serialization of (seed, path).
    h = hashlib.sha256()
    h.update(b"fkdyn-stream-v1")
    h.update(struct.pack("<q", int(seed)))
    for part in path:
        if isinstance(part, str):
            h.update(b"s" + part.encode("utf-8") + b"\x00")
        else:
            h.update(b"i" + struct.pack("<q", int(part)))
    k0, k1, c2, c3 = struct.unpack("<IIII", h.digest()[:16])
    return k0, k1, c2, c3


def _to_uniform53(w1, w2):
    hi = (np.asarray(w1, dtype=np.uint64) >> np.uint64(5)) << np.uint64(26)
    lo = np.asarray(w2, dtype=np.uint64) >> np.uint64(6)
    return (hi | lo) * (2.0 ** -53)


def _to_exponential(w3):
    u = (np.asarray(w3, dtype=np.float64) + 0.5) * (2.0 ** -32)
    return -np.log(u)


class RandomnessStream:
    """Addressable event stream: event k yields (edge e_k, uniform u_k, Exp(1) w_k).

    Parameters
    ----------
    seed : int
        64-bit root seed shared by the whole experiment.
    path : tuple
        Substream address (ints and strings).  The root stream has path ().

    The stream also keeps a sequential cursor for chain drivers: ``next_event``
    consumes event ``cursor`` and advances it.  ``jump_to`` repositions the
    cursor in O(1); no state beyond the cursor exists.
    """

    _BUF = 4096

    def __init__(self, seed: int, path: tuple = ()):
        self.seed = int(seed)
        self.path = tuple(path)
        self._k0, self._k1, self._c2, self._c3 = _derive_words(self.seed, self.path)
        self.cursor = 0
        self._buf_start = -1
        self._buf = None

    def substream(self, *labels) -> "RandomnessStream":
        return RandomnessStream(self.seed, self.path + tuple(labels))

    def spawn_replicas(self, count: int) -> list["RandomnessStream"]:
        return [self.substream("replica", i) for i in range(count)]

    # ---- block generation -------------------------------------------------

    def raw_blocks(self, k0: int, count: int):
        """Philox words for events k0 .. k0+count-1, as four uint32 arrays."""
        ks = np.arange(k0, k0 + count, dtype=np.uint64)
        c0 = (ks & _MASK32).astype(_U32)
        c1 = (ks >> np.uint64(32)).astype(_U32)
        return philox4x32(c0, c1, _U32(self._c2), _U32(self._c3), _U32(self._k0), _U32(self._k1))

    def events(self, k0: int, count: int, num_edges: int):
        """Vectorized decode: (edges, uniforms, exponentials) for a k-range."""
        w0, w1, w2, w3 = self.raw_blocks(k0, count)
        edges = ((w0.astype(np.uint64) * np.uint64(num_edges)) >> np.uint64(32)).astype(np.int64)
        return edges, _to_uniform53(w1, w2), _to_exponential(w3)

    def events_at(self, indices, num_edges: int):
        """Like ``events`` but at an arbitrary array of event indices."""
        ks = np.asarray(indices, dtype=np.uint64)
        c0 = (ks & _MASK32).astype(_U32)
        c1 = (ks >> np.uint64(32)).astype(_U32)
        w0, w1, w2, w3 = philox4x32(
            c0, c1, _U32(self._c2), _U32(self._c3), _U32(self._k0), _U32(self._k1)
        )
        edges = ((w0.astype(np.uint64) * np.uint64(num_edges)) >> np.uint64(32)).astype(np.int64)
        return edges, _to_uniform53(w1, w2), _to_exponential(w3)

    def uniforms(self, k0: int, count: int):
        _, w1, w2, _ = self.raw_blocks(k0, count)
        return _to_uniform53(w1, w2)

    def integers(self, k0: int, count: int, bound: int):
        w0, _, _, _ = self.raw_blocks(k0, count)
        return ((w0.astype(np.uint64) * np.uint64(bound)) >> np.uint64(32)).astype(np.int64)

    # ---- sequential cursor ------------------------------------------------

    def _fill(self, start: int):
        self._buf_start = start
        self._buf = self.raw_blocks(start, self._BUF)

    def next_event(self, num_edges: int):
        """Consume one event at the cursor: returns (edge, uniform, waiting time)."""
        k = self.cursor
        if self._buf is None or not (self._buf_start <= k < self._buf_start + self._BUF):
            self._fill(k)
        i = k - self._buf_start
        w0 = int(self._buf[0][i])
        u = ((int(self._buf[1][i]) >> 5) * 67108864 + (int(self._buf[2][i]) >> 6)) * (2.0 ** -53)
        w = -np.log((int(self._buf[3][i]) + 0.5) * (2.0 ** -32))
        self.cursor = k + 1
        return (w0 * num_edges) >> 32, u, float(w)

    def jump_to(self, k: int):
        self.cursor = int(k)
