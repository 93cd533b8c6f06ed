"""Deterministic random streams.

All randomness in the package flows from one root seed. Each purpose
(parameter init, scene generation, sparsity sampling, augmentation, ...)
gets its own named stream so that consumers can be reordered or run in
parallel without perturbing each other.
"""

import hashlib

import numpy as np


def stream_seed(root_seed, name):
    """Derive a 64-bit child seed from (root_seed, name)."""
    digest = hashlib.sha256(f"{int(root_seed)}:{name}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def stream(root_seed, name):
    """A numpy Generator dedicated to one named purpose."""
    return np.random.Generator(np.random.PCG64(stream_seed(root_seed, name)))
