"""Matrix-product-state chains over binary variables, with gauge bookkeeping.

A chain of ``d`` cores ``A[0], ..., A[d-1]``, where core ``k`` has shape
``(r_k, 2, r_{k+1})`` and the outer bonds are trivial
(``r_0 = r_d = 1``), encodes the order-``d`` tensor whose entry at a bit
string ``v`` is the matrix product
``A[0][:, v_0, :] @ ... @ A[d-1][:, v_{d-1}, :]``.

Site and bond indices are 0-based throughout the Python API: bond ``k``
couples sites ``k`` and ``k+1``, so two-site windows live at bonds
``0 .. d-2``.

Gauge discipline is tracked explicitly in :class:`Gauge` rather than
re-derived: silently losing the mixed-canonical form is the classic
sweep bug, and all the cheap norm identities here (``Z`` equals the
squared Frobenius norm of the center core) depend on it.

``Mps`` values are treated as immutable: every operation returns a new
value and never mutates core data in place, so read-only sharing across
threads is safe.
"""

from dataclasses import dataclass

import numpy as np

from .errors import GaugeError
from .linalg import DEFAULT_RANK_TOL, svd, unfold_k

CENTER = "center"
TWO_SITE = "two_site"
NONE = "none"


@dataclass(frozen=True)
class Gauge:
    """Which prefix of the chain is left-canonical and suffix right-canonical.

    ``center`` at site k: cores 0..k-1 left-canonical, k+1..d-1 right-canonical.
    ``two_site`` at bond k: cores 0..k-1 left-canonical, k+2..d-1 right-canonical,
    with the norm carried jointly by the pair (k, k+1).
    """

    kind: str
    site: int | None = None

    @classmethod
    def none(cls):
        return cls(NONE, None)

    @classmethod
    def center(cls, k):
        return cls(CENTER, int(k))

    @classmethod
    def two_site(cls, k):
        return cls(TWO_SITE, int(k))


@dataclass(frozen=True)
class Mps:
    cores: tuple
    gauge: Gauge

    def __post_init__(self):
        # C-contiguous storage is part of the value: byte-identical chains
        # must contract byte-identically (BLAS picks paths by layout).
        cores = tuple(np.ascontiguousarray(c, dtype=np.float64) for c in self.cores)
        object.__setattr__(self, "cores", cores)
        if len(cores) < 1:
            raise ValueError("empty chain")
        for i, c in enumerate(cores):
            if c.ndim != 3 or c.shape[1] != 2:
                raise ValueError(f"core {i} has shape {c.shape}, expected (r_left, 2, r_right)")
        if cores[0].shape[0] != 1 or cores[-1].shape[2] != 1:
            raise ValueError("boundary bond dimensions must be 1")
        for i in range(len(cores) - 1):
            if cores[i].shape[2] != cores[i + 1].shape[0]:
                raise ValueError(
                    f"bond mismatch between cores {i} and {i + 1}: "
                    f"{cores[i].shape[2]} != {cores[i + 1].shape[0]}"
                )

    @property
    def d(self):
        return len(self.cores)

    @property
    def bond_dims(self):
        """Bonds ``(r_0, r_1, ..., r_d)`` including the trivial boundaries."""
        return (1,) + tuple(c.shape[2] for c in self.cores)

    @property
    def r_max(self):
        return max(self.bond_dims)

    @property
    def r_mean(self):
        """Average over the d-1 interior bonds."""
        interior = self.bond_dims[1:-1]
        return float(np.mean(interior)) if interior else 1.0

    def validate(self, tol=1e-10):
        """Check the canonical residuals implied by the gauge metadata."""
        g = self.gauge
        if g.kind == NONE:
            return
        if g.kind == CENTER:
            left_end, right_start = g.site, g.site + 1
        else:
            left_end, right_start = g.site, g.site + 2
        for i in range(left_end):
            r = check_canonical(self.cores[i], "left")
            if r > tol:
                raise GaugeError(f"core {i} fails left-canonical check (residual {r:.3e})")
        for i in range(right_start, self.d):
            r = check_canonical(self.cores[i], "right")
            if r > tol:
                raise GaugeError(f"core {i} fails right-canonical check (residual {r:.3e})")


@dataclass(frozen=True)
class MergedCore:
    """Two neighbouring cores contracted over their shared bond.

    ``tensor`` has shape ``(r_{k-1}, 2, 2, r_{k+1})`` for a window at
    bond ``site``; ``matrix`` is its 2-unfolding, the object the
    optimizers actually update.
    """

    site: int
    tensor: np.ndarray

    @property
    def matrix(self):
        return unfold_k(self.tensor, 2)


def bond_profile(d, r_max):
    """Maximal achievable bonds ``min(2^k, 2^(d-k), r_max)`` for k = 0..d."""
    dims = []
    for k in range(d + 1):
        e = min(k, d - k)
        dims.append(int(r_max) if e >= 63 else min(2**e, int(r_max)))
    return dims


def random_init(d, r_max, seed):
    """Random chain with right-canonical cores 1..d-1 and a unit-norm core 0.

    Entries are drawn i.i.d. standard normal and the chain is then
    right-canonicalized site by site, so the result sits at gauge
    center(0) with partition function exactly 1 (up to rounding).
    Deterministic for a fixed seed.
    """
    if d < 2:
        raise ValueError(f"chain length d={d} must be at least 2")
    if r_max < 1:
        raise ValueError(f"r_max={r_max} must be positive")
    rng = np.random.default_rng(seed)
    dims = bond_profile(d, r_max)
    cores = [rng.standard_normal((dims[k], 2, dims[k + 1])) for k in range(d)]
    for i in range(d - 1, 0, -1):
        cores[i], carry = _right_orthonormalize(cores[i])
        cores[i - 1] = cores[i - 1] @ carry
    cores[0] = cores[0] / np.linalg.norm(cores[0])
    return Mps(tuple(cores), Gauge.center(0))


def check_canonical(core, side):
    """Frobenius residual of the left/right canonical condition for one core.

    left:  ``sum_v A(v)^T A(v) - I``;  right: ``sum_v A(v) A(v)^T - I``.
    """
    core = np.asarray(core)
    r_l, _, r_r = core.shape
    if side == "left":
        m = core.reshape(r_l * 2, r_r)
        gram = m.T @ m
        return float(np.linalg.norm(gram - np.eye(r_r)))
    if side == "right":
        m = core.reshape(r_l, 2 * r_r)
        gram = m @ m.T
        return float(np.linalg.norm(gram - np.eye(r_l)))
    raise ValueError(f"side must be 'left' or 'right', got {side!r}")


def _left_orthonormalize(core):
    """QR-factor a core so it becomes left-canonical; return (core, carry)."""
    r_l, _, r_r = core.shape
    q, r = np.linalg.qr(core.reshape(r_l * 2, r_r))
    return q.reshape(r_l, 2, -1), r


def _right_orthonormalize(core):
    """LQ-factor a core so it becomes right-canonical; return (core, carry)."""
    r_l, _, r_r = core.shape
    q, r = np.linalg.qr(core.reshape(r_l, 2 * r_r).T)
    return q.T.reshape(-1, 2, r_r), r.T


def canonicalize(mps, center):
    """Move the orthogonality center to ``center`` without changing amplitudes."""
    d = mps.d
    if not 0 <= center < d:
        raise ValueError(f"center {center} out of range for d={d}")
    cores = [c.copy() for c in mps.cores]
    g = mps.gauge
    # Segments already guaranteed canonical by the gauge metadata are skipped.
    if g.kind == CENTER:
        left_start, right_stop = g.site, g.site
    elif g.kind == TWO_SITE:
        left_start, right_stop = g.site, g.site + 1
    else:
        left_start, right_stop = 0, d - 1
    for i in range(min(left_start, center), center):
        cores[i], carry = _left_orthonormalize(cores[i])
        cores[i + 1] = np.einsum("ij,jvb->ivb", carry, cores[i + 1])
    for i in range(max(right_stop, center), center, -1):
        cores[i], carry = _right_orthonormalize(cores[i])
        cores[i - 1] = cores[i - 1] @ carry
    return Mps(tuple(cores), Gauge.center(center))


def contract_pair(a, b):
    """Contract cores at sites k, k+1 over their shared bond -> 4-way tensor."""
    return np.einsum("avb,bwc->avwc", a, b)


def merge(mps, k):
    """Contract the cores at sites k and k+1 into a :class:`MergedCore`."""
    if not 0 <= k < mps.d - 1:
        raise ValueError(f"bond {k} out of range for d={mps.d}")
    return MergedCore(site=k, tensor=contract_pair(mps.cores[k], mps.cores[k + 1]))


def _require_window_gauge(mps, k):
    g = mps.gauge
    ok = (g.kind == TWO_SITE and g.site == k) or (g.kind == CENTER and g.site in (k, k + 1))
    if not ok:
        raise GaugeError(f"gauge {g} is not centered on the two-site window at bond {k}")


def as_two_site(mps, k):
    """Relabel a chain centered at site k or k+1 as two-site centered at bond k."""
    _require_window_gauge(mps, k)
    return Mps(mps.cores, Gauge.two_site(k))


def split_merged_tensor(tensor, direction, max_rank=None, rank_tol=DEFAULT_RANK_TOL):
    """SVD-factor a (r_l, 2, 2, r_r) window tensor back into two cores.

    ``direction='right'`` makes the left factor left-canonical and puts
    the singular weight on the right core; ``'left'`` mirrors that.
    Returns ``(core_left, core_right)``.
    """
    tensor = np.asarray(tensor)
    if tensor.ndim != 4 or tensor.shape[1:3] != (2, 2):
        raise ValueError(f"expected a (r_l, 2, 2, r_r) tensor, got shape {tensor.shape}")
    if direction not in ("left", "right"):
        raise ValueError(f"direction must be 'left' or 'right', got {direction!r}")
    r_l, _, _, r_r = tensor.shape
    fac = svd(unfold_k(tensor, 2), rank_tol=rank_tol, max_rank=max_rank)
    if fac.rank == 0:
        raise ValueError("merged tensor is numerically zero")
    if direction == "right":
        left, right = fac.u, fac.s[:, None] * fac.v.T
    else:
        left, right = fac.u * fac.s, fac.v.T
    return left.reshape(r_l, 2, fac.rank), right.reshape(fac.rank, 2, r_r)


def split(mps, k, merged, direction, max_rank=None, rank_tol=DEFAULT_RANK_TOL):
    """Replace the window at bond k with the SVD factors of ``merged``.

    ``direction='right'`` leaves site k left-canonical and moves the
    center to k+1; ``'left'`` leaves site k+1 right-canonical and moves
    the center to k.  ``max_rank`` truncates the retained bond (the
    projected-gradient baseline needs this; the manifold trainer never
    exceeds its rank bound, so only sub-``rank_tol`` noise is dropped).
    """
    _require_window_gauge(mps, k)
    tensor = merged.tensor if isinstance(merged, MergedCore) else np.asarray(merged)
    if tensor.ndim != 4 or (tensor.shape[0], tensor.shape[3]) != (
        mps.cores[k].shape[0],
        mps.cores[k + 1].shape[2],
    ):
        raise ValueError(f"merged tensor shape {tensor.shape} does not fit the window at bond {k}")
    left, right = split_merged_tensor(tensor, direction, max_rank=max_rank, rank_tol=rank_tol)
    cores = list(mps.cores)
    cores[k] = left
    cores[k + 1] = right
    new_gauge = Gauge.center(k + 1 if direction == "right" else k)
    return Mps(tuple(cores), new_gauge)


def _bits_array(v, d):
    bits = np.asarray([int(b) for b in v] if isinstance(v, str) else v, dtype=np.int64)
    if bits.shape != (d,):
        raise ValueError(f"bit string has length {bits.size}, expected {d}")
    if not np.all((bits == 0) | (bits == 1)):
        raise ValueError("bit string contains non-binary symbols")
    return bits


def amplitude(mps, v):
    """Wavefunction value at one bit string: the chain matrix product."""
    bits = _bits_array(v, mps.d)
    vec = np.ones(1)
    for core, b in zip(mps.cores, bits):
        vec = vec @ core[:, b, :]
    return float(vec[0])


def amplitudes(mps, bits):
    """Vectorized :func:`amplitude` for a (n_samples, d) bit matrix."""
    bits = np.asarray(bits)
    n = bits.shape[0]
    x = np.ones((n, 1))
    for i, core in enumerate(mps.cores):
        nxt = np.empty((n, core.shape[2]))
        for b in (0, 1):
            m = bits[:, i] == b
            nxt[m] = x[m] @ core[:, b, :]
        x = nxt
    return x[:, 0]


def partition_function(mps):
    """Total squared amplitude ``Z``.

    Uses the gauge identity (squared norm of the center core, or of the
    merged pair for a two-site gauge); an ungauged chain is canonicalized
    on a copy first.
    """
    g = mps.gauge
    if g.kind == CENTER:
        return float(np.sum(mps.cores[g.site] ** 2))
    if g.kind == TWO_SITE:
        return float(np.sum(contract_pair(mps.cores[g.site], mps.cores[g.site + 1]) ** 2))
    return partition_function(canonicalize(mps, 0))
