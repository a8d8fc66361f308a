"""SplitMix64 random stream.

SplitMix64 is counter based: output ``i`` is a fixed mix of
``seed + i * 0x9E3779B97F4A7C15`` (mod 2**64), so a block of outputs is one
vectorized numpy expression and the stream is identical on every platform.
Uniforms take the top 53 bits; normals use Box-Muller on consecutive pairs.
"""
import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1


def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


class SplitMix64:
    def __init__(self, seed=0):
        self.state = int(seed) & _MASK

    def next_u64(self, n):
        n = int(n)
        with np.errstate(over="ignore"):
            steps = np.arange(1, n + 1, dtype=np.uint64)
            z = np.uint64(self.state) + steps * _GOLDEN
            out = _mix(z)
        self.state = (self.state + n * 0x9E3779B97F4A7C15) & _MASK
        return out

    def random(self, size=None):
        """Uniform floats in [0, 1)."""
        shape = () if size is None else size
        n = int(np.prod(shape, dtype=np.int64))
        u = (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * 2.0 ** -53
        return u.reshape(shape) if size is not None else float(u[0])

    def uniform(self, low=0.0, high=1.0, size=None):
        return low + (high - low) * self.random(size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        shape = () if size is None else size
        n = int(np.prod(shape, dtype=np.int64))
        m = (n + 1) // 2
        u = self.random((2, m))
        r = np.sqrt(-2.0 * np.log1p(-u[0]))
        theta = 2.0 * np.pi * u[1]
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
        z = loc + scale * z
        return z.reshape(shape) if size is not None else float(z[0])

    def permutation(self, n):
        return np.argsort(self.random(n), kind="stable")
