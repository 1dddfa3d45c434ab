"""Deterministic seed derivation.

Every stochastic component takes an explicit generator seeded from a master
seed.  Derived seeds are a pure function of (master seed, labels), so any
step of any pipeline can be replayed in isolation: resuming a training run
at step k draws exactly the noise an uninterrupted run would have drawn.
"""

from __future__ import annotations

import hashlib

import numpy as np
import torch

_U64 = 2**64


def derive_seed(master: int, *labels: int | str) -> int:
    """Derive a child seed from a master seed and a label path.

    Stable across processes and platforms (SHA-256 based, no hash
    randomization).
    """
    h = hashlib.sha256()
    h.update(str(int(master)).encode())
    for label in labels:
        h.update(b"/")
        h.update(str(label).encode())
    return int.from_bytes(h.digest()[:8], "little") % _U64


def torch_generator(seed: int) -> torch.Generator:
    gen = torch.Generator(device="cpu")
    gen.manual_seed(int(seed))
    return gen


def numpy_generator(seed: int) -> np.random.Generator:
    return np.random.default_rng(int(seed))
