"""Shared brute-force oracles, kept independent of the library code paths
they are used to check."""

import numpy as np
import pytest


def all_bitstrings(d):
    """(2^d, d) matrix of all length-d bit strings, most significant bit first."""
    return ((np.arange(2**d)[:, None] >> np.arange(d - 1, -1, -1)) & 1).astype(np.uint8)


def dense_tensor(mps):
    """Full coefficient vector over all 2^d strings by direct contraction.

    Accumulates configurations left to right, so entry i corresponds to
    row i of :func:`all_bitstrings`.  Independent of ``amplitude()``,
    which multiplies per-string matrix chains.
    """
    acc = np.ones((1, 1))
    for core in mps.cores:
        acc = np.einsum("xa,avb->xvb", acc, core).reshape(-1, core.shape[2])
    return acc[:, 0]


def brute_z(mps):
    return float(np.sum(dense_tensor(mps) ** 2))


def brute_distribution(mps):
    psi2 = dense_tensor(mps) ** 2
    return psi2 / psi2.sum()


def codes_of(bits):
    """Map bit rows to integer codes matching the all_bitstrings order."""
    bits = np.asarray(bits, dtype=np.int64)
    weights = 1 << np.arange(bits.shape[1] - 1, -1, -1)
    return bits @ weights


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
