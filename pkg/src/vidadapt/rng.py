"""Counter-based random streams.

Every source of randomness in the package flows through a ``PrngStream``,
a thin wrapper around numpy's Philox counter-based bit generator.  The
stream state is exactly the pair ``(seed, counter)``:

* ``seed`` is the 64-bit Philox key.
* ``counter`` counts draw *calls*; call ``i`` runs Philox with its 256-bit
  block counter set to ``i << 128``, so consecutive calls can never overlap
  regardless of how many values each one consumes.

Two streams with the same ``(seed, counter)`` produce identical output on a
given platform, which is what makes whole training runs bit-reproducible.
Independent sub-streams (data vs. weight init vs. diffusion noise) are
derived by hashing a text label into a fresh 64-bit seed.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _derive_seed(seed: int, label: str) -> int:
    digest = hashlib.sha256(f"{seed & _MASK64}/{label}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


class PrngStream:
    """Deterministic random stream identified by (seed, counter)."""

    def __init__(self, seed: int, counter: int = 0):
        self.seed = int(seed) & _MASK64
        self.counter = int(counter)

    def _next_generator(self) -> np.random.Generator:
        bitgen = np.random.Philox(key=self.seed, counter=self.counter << 128)
        self.counter += 1
        return np.random.Generator(bitgen)

    def derive(self, label: str) -> "PrngStream":
        """Independent child stream; same (seed, label) always gives the same child."""
        return PrngStream(_derive_seed(self.seed, label))

    def normal(self, shape) -> np.ndarray:
        return self._next_generator().standard_normal(shape, dtype=np.float32)

    def uniform(self, low: float, high: float, shape=None) -> np.ndarray:
        return self._next_generator().uniform(low, high, size=shape)

    def integers(self, low: int, high: int, shape=None) -> np.ndarray:
        return self._next_generator().integers(low, high, size=shape)

    def __repr__(self) -> str:
        return f"PrngStream(seed={self.seed}, counter={self.counter})"
