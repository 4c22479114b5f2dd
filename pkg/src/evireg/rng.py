"""Seeded PCG32 generator.

The stream is fully determined by the 64-bit seed, independent of numpy's
bit generators, so datasets and initial weights are reproducible across
numpy versions.
"""

import math

import numpy as np

_MASK64 = (1 << 64) - 1
_MASK32 = (1 << 32) - 1
_PCG_MULT = 6364136223846793005


def splitmix64(x):
    """One splitmix64 step; returns (new_state, output)."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x, z ^ (z >> 31)


class PCG32:
    """PCG-XSH-RR 64/32 generator seeded through splitmix64."""

    def __init__(self, seed=0):
        seed = int(seed)
        if not 0 <= seed <= _MASK64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        sm, initstate = splitmix64(seed)
        _, initseq = splitmix64(sm)
        self._inc = ((initseq << 1) | 1) & _MASK64
        self._state = 0
        self.next_u32()
        self._state = (self._state + initstate) & _MASK64
        self.next_u32()
        self._spare = None

    def next_u32(self):
        old = self._state
        self._state = (old * _PCG_MULT + self._inc) & _MASK64
        xorshifted = (((old >> 18) ^ old) >> 27) & _MASK32
        rot = old >> 59
        return ((xorshifted >> rot) | (xorshifted << ((-rot) & 31))) & _MASK32

    def uniform(self):
        """Double in [0, 1) with 53 random bits."""
        a = self.next_u32() >> 5
        b = self.next_u32() >> 6
        return (a * 67108864.0 + b) / 9007199254740992.0

    def randbelow(self, n):
        """Unbiased integer in [0, n)."""
        if n <= 0:
            raise ValueError("n must be positive")
        threshold = ((1 << 32) - n) % n
        while True:
            r = self.next_u32()
            if r >= threshold:
                return r % n

    def normal(self):
        """Standard normal via Box-Muller (pairs are cached)."""
        if self._spare is not None:
            z, self._spare = self._spare, None
            return z
        u1 = 1.0 - self.uniform()  # (0, 1], keeps log finite
        u2 = self.uniform()
        r = math.sqrt(-2.0 * math.log(u1))
        theta = 2.0 * math.pi * u2
        self._spare = r * math.sin(theta)
        return r * math.cos(theta)

    def gamma(self, shape, scale=1.0):
        """Gamma(shape, scale) by Marsaglia-Tsang."""
        if shape <= 0:
            raise ValueError("shape must be positive")
        if shape < 1.0:
            u = 1.0 - self.uniform()
            return self.gamma(shape + 1.0, scale) * u ** (1.0 / shape)
        d = shape - 1.0 / 3.0
        c = 1.0 / math.sqrt(9.0 * d)
        while True:
            x = self.normal()
            v = 1.0 + c * x
            if v <= 0.0:
                continue
            v = v * v * v
            u = 1.0 - self.uniform()
            if u < 1.0 - 0.0331 * x ** 4:
                return d * v * scale
            if math.log(u) < 0.5 * x * x + d * (1.0 - v + math.log(v)):
                return d * v * scale

    def uniform_array(self, n, low=0.0, high=1.0):
        return np.array([low + (high - low) * self.uniform() for _ in range(n)])

    def normal_array(self, n, loc=0.0, std=1.0):
        return np.array([loc + std * self.normal() for _ in range(n)])

    def permutation(self, n):
        """Fisher-Yates shuffle of range(n)."""
        idx = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.randbelow(i + 1)
            idx[i], idx[j] = idx[j], idx[i]
        return np.array(idx, dtype=np.int64)
