"""Seed-stream derivation shared by every randomized component."""

import zlib

import numpy as np


def _tag(label):
    if isinstance(label, (int, np.integer)):
        return int(label)
    return zlib.crc32(str(label).encode("utf-8"))


def stream(seed, *labels):
    """Return an independent Generator keyed on ``seed`` and a path of labels.

    The same (seed, labels) pair always yields the same stream, and distinct
    label paths yield statistically independent streams, so e.g. the design
    and the knockoffs never share random numbers even under one user seed.
    """
    if seed is None:
        return np.random.default_rng()
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [_tag(lab) for lab in labels]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def as_generator(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return stream(seed)
