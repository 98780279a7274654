"""Deterministic counter-based random streams.

Every draw is a pure function of (seed, stream_id, position): uint64 words
come from a splitmix64-style counter hash (see anosynth._kernels), uniforms
take the top 53 bits, and normals apply the Box-Muller transform to word
pairs. Distinct stream_ids give independent streams sharing one seed, so
concurrent samplers never have to coordinate.

The integer stage is exactly reproducible everywhere. The float stage is
reproducible for a given numpy build; log/cos/sin keep it from being a
cross-platform bitwise guarantee.
"""
import numpy as np

from . import _kernels

_GOLDEN = 0x9E3779B97F4A7C15
_STREAM_SALT = 0x3C6EF372FE94F82A  # 2*GOLDEN mod 2^64
_MASK64 = (1 << 64) - 1
_INV53 = 2.0 ** -53


def _mix64(z: int) -> int:
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def stream_key(seed: int, stream_id: int) -> int:
    """Collapse (seed, stream_id) into the 64-bit hash key of the stream."""
    return _mix64((seed + _GOLDEN) ^ _mix64(stream_id + _STREAM_SALT))


class RandomStream:
    """Counter-based random stream identified by (seed, stream_id, position).

    All draw methods advance ``position`` by the number of uint64 words they
    consume, so a stream can be snapshotted and replayed exactly.
    """

    def __init__(self, seed: int, stream_id: int = 0, position: int = 0):
        self.seed = int(seed) & _MASK64
        self.stream_id = int(stream_id) & _MASK64
        self.position = int(position)
        self._key = stream_key(self.seed, self.stream_id)

    def __repr__(self):
        return (f"RandomStream(seed={self.seed}, stream_id={self.stream_id}, "
                f"position={self.position})")

    def child(self, stream_id: int) -> "RandomStream":
        """Fresh independent stream under the same seed."""
        return RandomStream(self.seed, stream_id)

    def clone(self) -> "RandomStream":
        return RandomStream(self.seed, self.stream_id, self.position)

    def _words(self, n: int) -> np.ndarray:
        w = _kernels.counter_words(self._key, self.position, n)
        self.position += n
        return w

    def uniform(self, shape=()) -> np.ndarray:
        """i.i.d. uniforms on [0, 1), one word per value (53-bit mantissa)."""
        shape = _as_shape(shape)
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        u = (self._words(n) >> np.uint64(11)).astype(np.float64) * _INV53
        return u.reshape(shape) if shape else float(u[0])

    def gaussian(self, shape=()) -> np.ndarray:
        """i.i.d. standard normals via Box-Muller on word pairs.

        Consumes 2*ceil(n/2) words: pair (w0, w1) gives
        r = sqrt(-2 ln u1), z = (r cos(2 pi u2), r sin(2 pi u2)) with
        u1 = ((w0 >> 11) + 1) * 2^-53 in (0, 1] and u2 = (w1 >> 11) * 2^-53.
        """
        shape = _as_shape(shape)
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        npairs = (n + 1) // 2
        w = self._words(2 * npairs).reshape(npairs, 2)
        u1 = ((w[:, 0] >> np.uint64(11)).astype(np.float64) + 1.0) * _INV53
        u2 = (w[:, 1] >> np.uint64(11)).astype(np.float64) * _INV53
        r = np.sqrt(-2.0 * np.log(u1))
        theta = (2.0 * np.pi) * u2
        z = np.empty(2 * npairs)
        z[0::2] = r * np.cos(theta)
        z[1::2] = r * np.sin(theta)
        z = z[:n]
        return z.reshape(shape) if shape else float(z[0])

    def integers(self, low: int, high: int, shape=()) -> np.ndarray:
        """Uniform integers on {low, ..., high} (inclusive)."""
        if high < low:
            raise ValueError("integers: high < low")
        span = high - low + 1
        u = np.atleast_1d(self.uniform(shape if shape else (1,)))
        out = low + np.minimum((u * span).astype(np.int64), span - 1)
        return out.reshape(_as_shape(shape)) if shape else int(out[0])


def gaussian_draw(stream: RandomStream, shape) -> np.ndarray:
    """Standard-normal tensor of the given shape, advancing the stream."""
    return stream.gaussian(shape)


def _as_shape(shape):
    if shape == () or shape is None:
        return ()
    if np.isscalar(shape):
        return (int(shape),)
    return tuple(int(s) for s in shape)
