"""Seeded 64-bit linear congruential generator.

The generator is pinned exactly so that acceptance runs are reproducible
bit-for-bit across platforms and implementations:

    state <- (6364136223846793005 * state + 1442695040888963407) mod 2^64

Each draw advances the state once and returns the top 53 bits as a uniform
in [0, 1): ``(state >> 11) * 2**-53``.
"""

import numpy as np

MULTIPLIER = 6364136223846793005
INCREMENT = 1442695040888963407
_MASK = (1 << 64) - 1


class Lcg:
    """Deterministic uniform generator with a documented update rule."""

    def __init__(self, seed):
        self.state = int(seed) & _MASK

    def next_uniform(self):
        """Advance once and return a uniform in [0, 1)."""
        self.state = (MULTIPLIER * self.state + INCREMENT) & _MASK
        return (self.state >> 11) * 2.0**-53

    def uniform(self, *shape):
        """Array of uniforms in [0, 1), drawn in C (row-major) order."""
        n = int(np.prod(shape)) if shape else 1
        out = np.empty(n)
        for i in range(n):
            out[i] = self.next_uniform()
        return out.reshape(shape) if shape else out[0]

    def symmetric(self, *shape):
        """Array of uniforms in [-1, 1)."""
        return 2.0 * self.uniform(*shape) - 1.0
