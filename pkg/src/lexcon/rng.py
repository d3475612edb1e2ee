"""Counter-based random streams keyed by (seed, pair id).

Every randomized stage draws from the Philox4x32-10 counter-based generator.
Draw ``j`` of the stream for pair ``p`` under seed ``s`` is lane ``j % 4`` of
the block produced by::

    counter = (j // 4, p & 0xFFFFFFFF, p >> 32, 0)
    key     = (s & 0xFFFFFFFF, s >> 32)

and the uniform variate is ``word / 2**32``. Because draws are addressed by
position rather than by generator state, any pair can be replayed alone and
parallel workers produce the same bytes as a sequential run.
"""

from __future__ import annotations

import numpy as np

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = 0x9E3779B9
_W1 = 0xBB67AE85
_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)
ROUNDS = 10


def philox4x32(counters: np.ndarray, key: tuple[int, int], rounds: int = ROUNDS) -> np.ndarray:
    """Apply Philox4x32 to an ``(n, 4)`` array of 32-bit counter words."""
    c = np.asarray(counters, dtype=np.uint64) & _MASK32
    x0, x1, x2, x3 = c[:, 0], c[:, 1], c[:, 2], c[:, 3]
    k0, k1 = int(key[0]) & 0xFFFFFFFF, int(key[1]) & 0xFFFFFFFF
    for _ in range(rounds):
        p0 = _M0 * x0
        p1 = _M1 * x2
        hi0, lo0 = p0 >> _SHIFT32, p0 & _MASK32
        hi1, lo1 = p1 >> _SHIFT32, p1 & _MASK32
        x0, x1, x2, x3 = (
            hi1 ^ x1 ^ np.uint64(k0),
            lo1,
            hi0 ^ x3 ^ np.uint64(k1),
            lo0,
        )
        k0 = (k0 + _W0) & 0xFFFFFFFF
        k1 = (k1 + _W1) & 0xFFFFFFFF
    return np.stack([x0, x1, x2, x3], axis=1).astype(np.uint32)


def _split_seed(seed: int) -> tuple[int, int]:
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed & 0xFFFFFFFF, seed >> 32


def uniforms(seed: int, stream_ids, n_draws: int) -> np.ndarray:
    """Return an ``(len(stream_ids), n_draws)`` array of uniforms in [0, 1).

    Row ``i`` holds draws ``0 .. n_draws-1`` of the stream for ``stream_ids[i]``.
    """
    ids = np.asarray(stream_ids, dtype=np.uint64).reshape(-1)
    n_blocks = (n_draws + 3) // 4
    if ids.size == 0 or n_blocks == 0:
        return np.zeros((ids.size, n_draws), dtype=np.float64)
    blocks = np.arange(n_blocks, dtype=np.uint64)
    ctr = np.zeros((ids.size, n_blocks, 4), dtype=np.uint64)
    ctr[:, :, 0] = blocks[None, :]
    ctr[:, :, 1] = (ids & _MASK32)[:, None]
    ctr[:, :, 2] = (ids >> _SHIFT32)[:, None]
    words = philox4x32(ctr.reshape(-1, 4), _split_seed(seed))
    words = words.reshape(ids.size, n_blocks * 4)[:, :n_draws]
    return words.astype(np.float64) * (1.0 / 2**32)


class Stream:
    """Sequential reader over one (seed, stream id) stream."""

    def __init__(self, seed: int, stream_id: int, size: int = 64):
        self.seed = seed
        self.stream_id = stream_id
        self._buf = uniforms(seed, [stream_id], size)[0]
        self._pos = 0

    def _ensure(self, n: int) -> None:
        if n > len(self._buf):
            size = max(n, 2 * len(self._buf))
            self._buf = uniforms(self.seed, [self.stream_id], size)[0]

    def next(self) -> float:
        self._ensure(self._pos + 1)
        u = float(self._buf[self._pos])
        self._pos += 1
        return u

    def below(self, n: int) -> int:
        """Uniform integer in ``[0, n)``."""
        return min(int(self.next() * n), n - 1)

    @property
    def position(self) -> int:
        return self._pos
