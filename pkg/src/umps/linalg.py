"""Dense tensor primitives: unfolding, inner products, rank-revealing SVD.

Every multiway array in this package is a C-contiguous ``float64`` numpy
array.  The flat storage order is therefore row-major: for an array with
dims ``(n_1, ..., n_d)`` the entry ``(i_1, ..., i_d)`` sits at linear
position ``i_d + i_{d-1}*n_d + ... + i_1*n_2*...*n_d`` (0-based, last
index fastest).  With that convention the k-unfolding -- first ``k`` modes
as rows, remaining modes as columns, both groups enumerated with their
trailing index fastest -- is exactly a reshape, which keeps the index
arithmetic bit-exact.
"""

from dataclasses import dataclass
from math import prod

import numpy as np

DEFAULT_RANK_TOL = 1e-12


def as_tensor(data, dims=None):
    """Coerce to a C-contiguous float64 array, optionally reshaped to ``dims``."""
    t = np.ascontiguousarray(data, dtype=np.float64)
    if dims is not None:
        t = t.reshape(tuple(dims))
    return t


def unfold_k(t, k):
    """Matricize ``t`` with its first ``k`` modes as rows.

    Parameters
    ----------
    t : ndarray
        Tensor of order ``d >= 2``.
    k : int
        Number of leading modes grouped into the rows, ``1 <= k < d``.

    Returns
    -------
    ndarray of shape ``(n_1*...*n_k, n_{k+1}*...*n_d)``.
    """
    t = np.asarray(t)
    d = t.ndim
    if not 1 <= k < d:
        raise ValueError(f"unfold mode k={k} out of range for order-{d} tensor")
    rows = prod(t.shape[:k])
    return np.ascontiguousarray(t).reshape(rows, -1)


def fold_k(m, dims, k):
    """Inverse of :func:`unfold_k`: reshape matrix ``m`` back to ``dims``."""
    m = np.asarray(m)
    dims = tuple(int(n) for n in dims)
    if not 1 <= k < len(dims):
        raise ValueError(f"fold mode k={k} out of range for dims {dims}")
    rows, cols = prod(dims[:k]), prod(dims[k:])
    if m.shape != (rows, cols):
        raise ValueError(f"matrix shape {m.shape} inconsistent with dims {dims} split at {k}")
    return np.ascontiguousarray(m).reshape(dims)


def inner(a, b):
    """Frobenius inner product; dims must match exactly."""
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"inner product of mismatched dims {a.shape} vs {b.shape}")
    return float(np.dot(a.ravel(), b.ravel()))


def frobenius_norm(a):
    return float(np.linalg.norm(np.asarray(a).ravel()))


@dataclass(frozen=True)
class SvdResult:
    """Truncated SVD ``m ~= u @ diag(s) @ v.T``.

    ``u`` (rows x rank) and ``v`` (cols x rank) have orthonormal columns,
    ``s`` is nonincreasing and strictly positive, ``rank == len(s)``.
    """

    u: np.ndarray
    s: np.ndarray
    v: np.ndarray
    rank: int

    def reconstruct(self):
        return (self.u * self.s) @ self.v.T


def svd(m, rank_tol=DEFAULT_RANK_TOL, max_rank=None):
    """Rank-revealing SVD with relative tolerance truncation.

    The retained rank is the number of singular values exceeding
    ``rank_tol * s_max``, further capped at ``max_rank`` when given.
    Truncation always keeps the largest singular values.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"svd expects a matrix, got order-{m.ndim} array")
    if not np.all(np.isfinite(m)):
        raise ValueError("svd input contains non-finite entries")
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    if s.size and s[0] > 0.0:
        rank = int(np.count_nonzero(s > rank_tol * s[0]))
    else:
        rank = 0
    if max_rank is not None:
        rank = min(rank, int(max_rank))
    return SvdResult(
        u=np.ascontiguousarray(u[:, :rank]),
        s=s[:rank].copy(),
        v=np.ascontiguousarray(vt[:rank].T),
        rank=rank,
    )
