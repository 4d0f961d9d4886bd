"""Counter-based Gaussian noise keyed by (seed, draw index).

Draw ``m`` of the stream with seed ``s`` is a pure function of ``(s, m)``,
so any number of paths can be advanced in lock-step with one vectorized
call and a path replays identically whether it is simulated alone, inside
an ensemble, or on a different worker. Bits come from the SplitMix64
output function applied to ``key(s) + counter * golden``; normals from the
Box-Muller transform on consecutive pairs of draws.
"""

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_STREAM = np.uint64(0xD1B54A32D192ED03)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30, _S27, _S31 = np.uint64(30), np.uint64(27), np.uint64(31)
_S11 = np.uint64(11)
_TWO_M53 = 2.0 ** -53


def _mix(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def _key(seeds):
    with np.errstate(over="ignore"):
        return _mix(np.asarray(seeds, dtype=np.uint64) + _GOLDEN)


def derive_seeds(master_seed, n, start=0):
    """Per-path 64-bit seeds ``(master_seed, i)`` for ``i`` in ``[start, start+n)``."""
    idx = np.arange(start, start + n, dtype=np.uint64) + np.uint64(1)
    with np.errstate(over="ignore"):
        return _mix(_key(np.uint64(master_seed)) + idx * _STREAM)


def _uniform_pairs(keys, pair_start, n_pairs):
    """Two uniform arrays of shape (len(keys), n_pairs) in (0,1] and [0,1)."""
    ctr = (np.arange(pair_start, pair_start + n_pairs, dtype=np.uint64) * np.uint64(2))
    with np.errstate(over="ignore"):
        base = keys[:, None] + ctr[None, :] * _GOLDEN
        a = _mix(base)
        b = _mix(base + _GOLDEN)
    u1 = ((a >> _S11).astype(np.float64) + 1.0) * _TWO_M53
    u2 = (b >> _S11).astype(np.float64) * _TWO_M53
    return u1, u2


def normals(seeds, start, count):
    """Standard normals ``count`` draws from offset ``start`` for every seed.

    Returns an array of shape ``(len(seeds), count)``; draw ``m`` for a
    given seed never depends on ``start``/``count`` chunking.
    """
    seeds = np.atleast_1d(np.asarray(seeds, dtype=np.uint64))
    if count <= 0:
        return np.empty((seeds.size, 0))
    keys = _key(seeds)
    p0 = start // 2
    p1 = (start + count + 1) // 2
    u1, u2 = _uniform_pairs(keys, p0, p1 - p0)
    r = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u2
    z = np.empty((seeds.size, 2 * (p1 - p0)))
    z[:, 0::2] = r * np.cos(theta)
    z[:, 1::2] = r * np.sin(theta)
    off = start - 2 * p0
    return z[:, off:off + count]


class NoiseStream:
    """Chunked reader of per-path noise blocks of shape ``(n_paths, dim)``."""

    def __init__(self, seeds, dim, chunk_steps=256):
        self.seeds = np.atleast_1d(np.asarray(seeds, dtype=np.uint64))
        self.dim = dim
        self.chunk = max(1, int(chunk_steps))
        self._buf = None
        self._buf_start = 0

    def at(self, step, rows=None):
        """Noise for step ``step`` (rows optionally restricted to a subset)."""
        if self._buf is None or not (self._buf_start <= step < self._buf_start + self.chunk):
            self._buf_start = step - step % self.chunk
            z = normals(self.seeds, self._buf_start * self.dim, self.chunk * self.dim)
            self._buf = z.reshape(self.seeds.size, self.chunk, self.dim)
        block = self._buf[:, step - self._buf_start, :]
        return block if rows is None else block[rows]

    def compact(self, keep):
        """Drop paths not in boolean mask ``keep`` (absorbed paths)."""
        self.seeds = self.seeds[keep]
        if self._buf is not None:
            self._buf = self._buf[keep]
