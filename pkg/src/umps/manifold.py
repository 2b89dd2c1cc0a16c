"""Geometry of the unit-norm low-rank constraint set, in decoupled form.

The feasible set {X : ||X||_F = 1, rank(X) <= r} is nonsmooth at
rank-deficient points.  It is parameterized here by pairs (X, G) with
X G = 0 and G an orthogonal projector of rank n-r, stored through the
compact representation

    X = H V^T,   G = I - V V^T,

with H (m x r) of unit Frobenius norm and V (n x r) orthonormal.  The
sphere constraint lives entirely on H and the rank constraint entirely
on V, so both are preserved exactly by the retraction -- no projection
or truncation step ever discards amplitude.

Tangent vectors are likewise represented by pairs (K, V_p) with
<K, H> = 0 and V^T V_p = 0.  The inner product used on tangent pairs is
weighted: <K1, K2> + <V_p1, V_p2 (2*omega*I + H^T H)>, with omega = 1 by
default.  The n x n projector G is never materialized; every operation
works on the (m x r) / (n x r) factors.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import GaugeDriftError, UmpsError
from .linalg import DEFAULT_RANK_TOL

DEFAULT_OMEGA = 1.0


class RetractionError(UmpsError):
    """The requested step degenerates the representation (h + K vanished)."""


@dataclass(frozen=True)
class MhPoint:
    """Point on the decoupled manifold via its (H, V) representation."""

    h: np.ndarray
    v: np.ndarray

    @property
    def shape(self):
        return (self.h.shape[0], self.v.shape[0])

    @property
    def r(self):
        return self.h.shape[1]

    @property
    def x(self):
        """The represented matrix H V^T (materialized on demand)."""
        return self.h @ self.v.T

    def complement_project(self, a):
        """Apply G = I - V V^T to an (n x j) matrix without forming G."""
        return a - self.v @ (self.v.T @ a)

    def validate(self, tol=1e-10):
        if abs(np.linalg.norm(self.h) - 1.0) > tol:
            raise GaugeDriftError(f"|‖h‖ - 1| = {abs(np.linalg.norm(self.h) - 1.0):.3e}")
        vtv = self.v.T @ self.v
        res = np.linalg.norm(vtv - np.eye(self.r))
        if res > tol:
            raise UmpsError(f"v columns not orthonormal (residual {res:.3e})")


@dataclass(frozen=True)
class TangentRep:
    """Tangent vector at an :class:`MhPoint` via its (K, V_p) representation."""

    k: np.ndarray
    v_p: np.ndarray

    def scaled(self, c):
        return TangentRep(c * self.k, c * self.v_p)

    def ambient_x(self, point):
        """X-component of the tangent vector in the ambient space."""
        return self.k @ point.v.T + point.h @ self.v_p.T

    def validate(self, point, tol=1e-10):
        if abs(float(np.dot(self.k.ravel(), point.h.ravel()))) > tol:
            raise UmpsError("k is not tangent to the unit sphere at h")
        if np.linalg.norm(point.v.T @ self.v_p) > tol:
            raise UmpsError("v_p is not orthogonal to the column span of v")


def weight_matrix(h, omega=DEFAULT_OMEGA):
    """SPD metric weight ``2*omega*I + h^T h`` (r x r)."""
    r = h.shape[1]
    return 2.0 * omega * np.eye(r) + h.T @ h


def lift(x, r, rank_tol=DEFAULT_RANK_TOL):
    """Factor a unit-norm matrix into an :class:`MhPoint` of rank bound ``r``.

    The effective bound is ``min(r, m, n)``.  When the numerical rank of
    ``x`` falls below it, ``v`` is padded with further orthonormal
    right-singular directions (whose weight in ``h`` is negligible), so
    the complement projector keeps rank exactly n-r even at
    rank-deficient points.
    """
    x = np.asarray(x, dtype=np.float64)
    m, n = x.shape
    nrm = np.linalg.norm(x)
    if abs(nrm - 1.0) > 1e-6:
        raise GaugeDriftError(f"lift expects a unit-norm matrix, got ‖x‖ = {nrm:.9f}")
    r_eff = min(int(r), m, n)
    if r_eff < 1:
        raise ValueError(f"rank bound {r} must be positive")
    u, s, vt = np.linalg.svd(x, full_matrices=False)
    h = u[:, :r_eff] * s[:r_eff]
    h /= np.linalg.norm(h)
    return MhPoint(h=h, v=np.ascontiguousarray(vt[:r_eff].T))


def riemannian_grad(point, eucl_grad, omega=DEFAULT_OMEGA):
    """Riemannian gradient of f(X) lifted to the decoupled manifold.

        K    = grad_f V - <grad_f V, H> H
        V_p  = G grad_f^T H (2*omega*I + H^T H)^{-1}

    Directions proportional to X itself (pure rescalings of the model)
    map to the zero tangent vector: the sphere component kills them in K
    and the complement projector kills them in V_p.
    """
    eucl_grad = np.asarray(eucl_grad, dtype=np.float64)
    if eucl_grad.shape != point.shape:
        raise ValueError(f"gradient shape {eucl_grad.shape} != point shape {point.shape}")
    fv = eucl_grad @ point.v
    k = fv - float(np.dot(fv.ravel(), point.h.ravel())) * point.h
    gth = point.complement_project(eucl_grad.T @ point.h)
    m_w = cho_factor(weight_matrix(point.h, omega))
    v_p = cho_solve(m_w, gth.T).T
    return TangentRep(k=k, v_p=v_p)


def metric(point, t1, t2, omega=DEFAULT_OMEGA):
    """Weighted inner product of two tangent representations at ``point``."""
    m_w = weight_matrix(point.h, omega)
    return float(np.dot(t1.k.ravel(), t2.k.ravel()) + np.dot(t1.v_p.ravel(), (t2.v_p @ m_w).ravel()))


def retract(point, tangent, step):
    """Descent retraction: move from ``point`` along ``-step * tangent``.

        H' = (H - step*K) / ||H - step*K||_F
        V' = (V - step*V_p) (I + step^2 V_p^T V_p)^{-1/2}

    ``step = 0`` returns the point unchanged.  The output lies on the
    manifold by construction (unit-norm H', orthonormal V').
    """
    k = -step * tangent.k
    v_p = -step * tangent.v_p
    h_new = point.h + k
    nrm = np.linalg.norm(h_new)
    if nrm < 1e-300:
        raise RetractionError(f"step {step} annihilates h; reduce the learning rate")
    h_new /= nrm
    gram = np.eye(point.r) + v_p.T @ v_p
    w, q = np.linalg.eigh(gram)
    inv_sqrt = (q / np.sqrt(w)) @ q.T
    v_new = (point.v + v_p) @ inv_sqrt
    return MhPoint(h=h_new, v=v_new)


def check_transversal(x, rank=None, tol=1e-8):
    """Numerically test that the sphere and the fixed-rank manifold cross
    transversely at ``x``.

    Builds explicit bases of the two normal spaces -- span{X} for the
    sphere, span{u_i v_j^T} over the orthogonal complements for the
    fixed-rank manifold -- and checks that stacked as columns they remain
    full rank, i.e. the normal spaces intersect only at zero.
    """
    x = np.asarray(x, dtype=np.float64)
    m, n = x.shape
    if abs(np.linalg.norm(x) - 1.0) > 1e-8:
        raise ValueError("x must have unit Frobenius norm")
    u, s, vt = np.linalg.svd(x, full_matrices=True)
    k = int(np.count_nonzero(s > tol * s[0])) if rank is None else int(rank)
    if k < 1 or (rank is not None and s[min(k, len(s)) - 1] <= tol * s[0]):
        raise ValueError(f"x is rank deficient (numerical rank below {k})")
    u_perp = u[:, k:]
    v_perp = vt[k:].T
    normal_rank_part = np.einsum("mi,nj->mnij", u_perp, v_perp).reshape(m * n, -1)
    basis = np.column_stack([x.reshape(-1), normal_rank_part])
    sv = np.linalg.svd(basis, compute_uv=False)
    return bool(sv[-1] > tol * sv[0])
