"""Root-seed expansion.

Every stochastic stage takes an explicit integer seed. Stage seeds are
derived from one root seed with numpy's ``SeedSequence`` keyed by the
CRC-32 of the stage name, so adding a stage never perturbs the others.
Array sampling uses ``numpy.random.Generator(PCG64)``, whose output
stream is fixed across platforms for a given seed.
"""

from __future__ import annotations

import zlib

import numpy as np


def derive_seed(root: int, name: str) -> int:
    seq = np.random.SeedSequence([int(root) & 0xFFFFFFFF, zlib.crc32(name.encode("utf-8"))])
    return int(seq.generate_state(1, dtype=np.uint32)[0])


def rng(seed: int, *keys: int) -> np.random.Generator:
    """PCG64 generator for ``seed`` optionally refined by integer keys."""
    entropy = [int(seed) & 0xFFFFFFFF, *(int(k) & 0xFFFFFFFF for k in keys)]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
