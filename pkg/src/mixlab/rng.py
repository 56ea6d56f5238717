"""Seeded random streams.

Every stream is numpy's SFC64 generator (Small Fast Chaotic, a 256-bit state
updated with 64-bit add, shift and rotate).  Seeds are expanded into generator
state with :class:`numpy.random.SeedSequence`; a key tuple such as
``(epoch, batch)`` becomes the sequence's ``spawn_key`` so sub-streams are
derived deterministically without sharing state.

Uniforms take the top 53 bits of one raw 64-bit output.  Normals come from the
Box-Muller transform on consecutive raw pairs ``(u1, u2)``; both outputs of a
pair are used, cosine branch first, and an odd request keeps the spare for the
next call.
"""

import numpy as np

_TWO_PI = 2.0 * np.pi
_INV_2_53 = 1.0 / 9007199254740992.0


class Rng:
    """Deterministic random stream built from a 64-bit seed and optional key."""

    def __init__(self, seed, key=()):
        seed = int(seed)
        if seed < 0 or seed >= 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        seq = np.random.SeedSequence(entropy=seed, spawn_key=tuple(int(k) for k in key))
        self._bitgen = np.random.SFC64(seq)
        self._spare = None

    def raw(self, n):
        """Return ``n`` raw 64-bit outputs."""
        return self._bitgen.random_raw(int(n)).astype(np.uint64)

    def uniform(self, n):
        """Return ``n`` uniforms on [0, 1)."""
        return (self.raw(n) >> np.uint64(11)).astype(np.float64) * _INV_2_53

    def normal(self, shape):
        """Return standard normals of the given shape, filled in C order."""
        shape = (shape,) if np.isscalar(shape) else tuple(shape)
        n = int(np.prod(shape, dtype=np.int64))
        out = np.empty(n)
        start = 0
        if n and self._spare is not None:
            out[0] = self._spare
            self._spare = None
            start = 1
        remaining = n - start
        if remaining > 0:
            pairs = (remaining + 1) // 2
            u = self.uniform(2 * pairs).reshape(pairs, 2)
            radius = np.sqrt(-2.0 * np.log1p(-u[:, 0]))  # 1 - u1 lies in (0, 1]
            angle = _TWO_PI * u[:, 1]
            z = np.empty((pairs, 2))
            z[:, 0] = radius * np.cos(angle)
            z[:, 1] = radius * np.sin(angle)
            z = z.ravel()
            out[start:] = z[:remaining]
            if remaining % 2:
                self._spare = z[-1]
        return out.reshape(shape)

    def permutation(self, n):
        """Uniform random permutation of ``range(n)`` via sorted random keys."""
        return np.argsort(self.raw(n), kind="stable")
