"""Seeded random tapes shared by every algorithm.

Reward noise for arm ``k`` comes from its own stream keyed by
``(base, rep, 0, k)``, so the n-th pull of an arm sees the same noise whatever
algorithm or configuration is running: runs on the same ``(base, rep)`` are
paired. Internal randomness (sampling from the learner's weights, picking
restricted arms) uses a stream keyed by ``(base, rep, 1, alg)``.
"""

from __future__ import annotations

import numpy as np

GENERATOR = "numpy.PCG64/SeedSequence"


def _gen(*key) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(k) for k in key])))


def seed_record(base: int, rep: int = 0, alg: int = 0) -> dict:
    return {"generator": GENERATOR, "base": int(base), "rep": int(rep), "alg": int(alg)}


class Tapes:
    """Fixed-size buffers of noise (per arm) and uniforms, topped up from their streams."""

    def __init__(self, K: int, base: int, rep: int = 0, alg: int = 0, size: int = 4096):
        if base < 0 or rep < 0 or alg < 0:
            raise ValueError("seed components must be non-negative")
        self.seed = seed_record(base, rep, alg)
        self._noise_gens = [_gen(base, rep, 0, k) for k in range(K)]
        self._alg_gen = _gen(base, rep, 1, alg)
        self.noise = np.stack([g.standard_normal(size) for g in self._noise_gens])
        self.nptr = np.zeros(K, dtype=np.int64)
        self.unif = self._alg_gen.random(size)
        self.uptr = np.zeros(1, dtype=np.int64)

    def refill(self) -> None:
        """Move unread values to the front and append fresh draws in stream order."""
        size = self.noise.shape[1]
        for k, used in enumerate(self.nptr):
            if used > size // 2:
                self.noise[k, : size - used] = self.noise[k, used:]
                self.noise[k, size - used:] = self._noise_gens[k].standard_normal(int(used))
                self.nptr[k] = 0
        used = int(self.uptr[0])
        if used > self.unif.shape[0] // 2:
            n = self.unif.shape[0]
            self.unif[: n - used] = self.unif[used:]
            self.unif[n - used:] = self._alg_gen.random(used)
            self.uptr[0] = 0
