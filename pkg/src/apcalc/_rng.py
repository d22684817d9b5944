"""Seed derivation.

Every random draw in the package comes from a stream keyed on
``(master_seed, tag, *indices)`` so results do not depend on the order in
which cells, labels or rows are evaluated.
"""
import zlib

import numpy as np

_MASK64 = (1 << 64) - 1


def derive_rng(seed, tag, *indices):
    """Return a ``numpy.random.Generator`` for the stream ``(seed, tag, *indices)``."""
    key = (zlib.crc32(tag.encode("utf-8")),) + tuple(int(i) for i in indices)
    ss = np.random.SeedSequence(entropy=int(seed) & _MASK64, spawn_key=key)
    return np.random.Generator(np.random.PCG64(ss))


def antithetic_normal(rng, k, d):
    """Draw ``k`` standard normal ``d``-vectors as antithetic pairs.

    ``k`` is rounded up to the next even number so the returned sample is
    symmetric about zero.
    """
    half = (int(k) + 1) // 2
    z = rng.standard_normal((half, d))
    return np.concatenate([z, -z], axis=0)
