"""Log-likelihood objective, two-site gradients, and the sweep trainers.

Both trainers run the same schedule: one loop visits the bonds
0, 1, ..., d-2 splitting rightward and then d-2, ..., 0 splitting
leftward, so a loop performs 2(d-1) two-site updates and ends back at
gauge center 0.  The difference is the per-window update rule:

* ``umps_sd_fit`` lifts the window's 2-unfolding onto the decoupled
  unit-norm / bounded-rank manifold and takes one Riemannian
  gradient-descent step through the retraction, so the model norm and
  bond bound are preserved exactly and the split never discards weight.
* ``baseline_gd_fit`` takes a plain Euclidean gradient step, projects
  back to the unit sphere by rescaling, and relies on a truncated SVD to
  re-impose the bond bound (which is where its norm leaks).

Environments (the partial chain contractions flanking the window) are
cached per sample and moved by one matrix-vector product per step, so a
full sweep costs O(|T| d r_max^2) plus the O(r_max^3) local factorizations.
"""

from dataclasses import dataclass, field
from time import perf_counter

import numpy as np

from .errors import GaugeDriftError, SingularAmplitudeError
from .linalg import fold_k, unfold_k
from .manifold import lift, retract, riemannian_grad
from .mps import (
    CENTER,
    Gauge,
    MergedCore,
    Mps,
    amplitudes,
    canonicalize,
    contract_pair,
    partition_function,
    split_merged_tensor,
)

AMP_FLOOR = 1e-300
LOOP_PLATEAU_TOL = 1e-8
UNIT_NORM_TOL = 1e-6

TRACE_CSV_HEADER = "loop,site,dir,nll,elapsed_s,r_mean,r_max,z"


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters shared by both trainers.

    ``r_max`` bounds every bond dimension, ``theta`` is the constant
    per-step learning rate, ``l_max`` the number of sweep loops,
    ``omega`` the tangent-metric weight, ``log_every`` the number of
    site updates between trace rows (loop boundaries are always logged).
    """

    r_max: int = 8
    theta: float = 0.01
    l_max: int = 10
    omega: float = 1.0
    seed: int | None = 0
    log_every: int = 1

    def __post_init__(self):
        if self.r_max < 1:
            raise ValueError(f"r_max must be >= 1, got {self.r_max}")
        if not self.theta > 0:
            raise ValueError(f"theta must be positive, got {self.theta}")
        if self.l_max < 1:
            raise ValueError(f"l_max must be >= 1, got {self.l_max}")
        if not self.omega > 0:
            raise ValueError(f"omega must be positive, got {self.omega}")
        if self.log_every < 1:
            raise ValueError(f"log_every must be >= 1, got {self.log_every}")


@dataclass(frozen=True)
class TraceRow:
    """One logged site update.  ``site`` is the 1-based bond index (the
    convention used in the trace CSV); ``direction`` is 'R' or 'L'."""

    loop: int
    site: int
    direction: str
    nll: float
    elapsed_s: float
    r_mean: float
    r_max: int
    z: float


@dataclass
class TrainTrace:
    rows: list = field(default_factory=list)

    def append(self, row):
        self.rows.append(row)

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    @property
    def final_nll(self):
        return self.rows[-1].nll

    def loop_nlls(self):
        """NLL at the last logged row of each loop, keyed by loop index."""
        out = {}
        for r in self.rows:
            out[r.loop] = r.nll
        return out

    def write_csv(self, fh, comments=()):
        for line in comments:
            fh.write(f"# {line}\n")
        fh.write(TRACE_CSV_HEADER + "\n")
        for r in self.rows:
            fh.write(
                f"{r.loop},{r.site},{r.direction},{r.nll:.12g},"
                f"{r.elapsed_s:.6f},{r.r_mean:.6g},{r.r_max},{r.z:.12g}\n"
            )


def dataset_bits(dataset):
    """Coerce a dataset (BinaryDataset or array-like) to a (n, d) uint8 matrix."""
    bits = dataset.bits if hasattr(dataset, "bits") else dataset
    bits = np.ascontiguousarray(np.asarray(bits), dtype=np.uint8)
    if bits.ndim != 2 or bits.shape[0] == 0:
        raise ValueError(f"expected a nonempty (n_samples, d) bit matrix, got shape {bits.shape}")
    if bits.max(initial=0) > 1:
        raise ValueError("dataset contains non-binary entries")
    return bits


def nll(mps, dataset):
    """Mean negative log-likelihood -(1/|T|) sum ln(psi(v)^2 / Z).

    ``Z`` comes from the gauge identity, so for a unit-norm model the
    correction term vanishes (up to drift); for the projected-gradient
    baseline it accounts for the norm lost to truncation.  Raises
    :class:`SingularAmplitudeError` if any sample has zero amplitude.
    """
    bits = dataset_bits(dataset)
    if bits.shape[1] != mps.d:
        raise ValueError(f"dataset length {bits.shape[1]} != chain length {mps.d}")
    psi = amplitudes(mps, bits)
    bad = np.flatnonzero(np.abs(psi) < AMP_FLOOR)
    if bad.size:
        raise SingularAmplitudeError(bad[0])
    return float(-2.0 * np.mean(np.log(np.abs(psi))) + np.log(partition_function(mps)))


class EnvCache:
    """Per-sample left/right chain contractions around the active window.

    ``left[i]`` is the row vector A(v_0)...A(v_{k-1}) and ``right[i]``
    the column vector A(v_{k+2})...A(v_{d-1}) for sample i, stored as
    (n, r) matrices.  Environments for bonds the sweep has not reached
    yet are kept on two stacks, so each move costs one batched
    matrix-vector product; the stacked values stay valid because a sweep
    only rewrites cores inside the window it has already passed.
    """

    def __init__(self, bits, left, right, k, left_stack, right_stack):
        self.bits = bits
        self.left = left
        self.right = right
        self.k = k
        self._left_stack = left_stack
        self._right_stack = right_stack

    @classmethod
    def build(cls, cores, bits, k=0):
        d = len(cores)
        if not 0 <= k <= d - 2:
            raise ValueError(f"window bond {k} out of range for d={d}")
        n = bits.shape[0]
        left = np.ones((n, 1))
        left_stack = []
        for j in range(k):
            left_stack.append(left)
            left = _apply_left(cores[j], left, bits[:, j])
        right = np.ones((n, 1))
        right_stack = []
        for j in range(d - 2, k, -1):
            right_stack.append(right)
            right = _apply_right(cores[j + 1], right, bits[:, j + 1])
        return cls(bits, left, right, k, left_stack, right_stack)

    @property
    def n_samples(self):
        return self.bits.shape[0]

    def window_masks(self):
        """Boolean masks grouping samples by their (v_k, v_{k+1}) bits."""
        vk = self.bits[:, self.k]
        vk1 = self.bits[:, self.k + 1]
        return {(a, b): (vk == a) & (vk1 == b) for a in (0, 1) for b in (0, 1)}

    def psi(self, tensor):
        """Amplitudes of all samples for a given window tensor."""
        out = np.empty(self.n_samples)
        for (a, b), m in self.window_masks().items():
            if not np.any(m):
                continue
            out[m] = np.einsum("ij,jk,ik->i", self.left[m], tensor[:, a, b, :], self.right[m])
        return out

    def advance_right(self, cores):
        """Move the window from bond k to k+1 (cores[k] must be final)."""
        k = self.k
        self._left_stack.append(self.left)
        self.left = _apply_left(cores[k], self.left, self.bits[:, k])
        self.right = self._right_stack.pop()
        self.k = k + 1

    def advance_left(self, cores):
        """Move the window from bond k to k-1 (cores[k+1] must be final)."""
        k = self.k
        self._right_stack.append(self.right)
        self.right = _apply_right(cores[k + 1], self.right, self.bits[:, k + 1])
        self.left = self._left_stack.pop()
        self.k = k - 1


def _apply_left(core, left, bits_col):
    out = np.empty((left.shape[0], core.shape[2]))
    for b in (0, 1):
        m = bits_col == b
        out[m] = left[m] @ core[:, b, :]
    return out


def _apply_right(core, right, bits_col):
    out = np.empty((right.shape[0], core.shape[0]))
    for b in (0, 1):
        m = bits_col == b
        out[m] = right[m] @ core[:, b, :].T
    return out


def advance_env(cache, mps, new_k):
    """Move the cache window to an adjacent bond of ``mps`` (in place)."""
    cores = mps.cores if isinstance(mps, Mps) else mps
    if new_k == cache.k + 1:
        cache.advance_right(cores)
    elif new_k == cache.k - 1:
        cache.advance_left(cores)
    else:
        raise ValueError(f"cannot jump from bond {cache.k} to non-adjacent bond {new_k}")
    return cache


def euclidean_grad(cache, merged, z=1.0):
    """Gradient of the normalized NLL with respect to the window tensor.

    With the chain mixed-canonical around the window, the partition
    function is ``z = ||A||_F^2`` and its derivative is ``2 A``, so

        grad = 2 A / z - (2/|T|) sum_v psi'(v) / psi(v),

    where ``psi'(v)`` is the rank-one environment outer product carrying
    the sample's window bits.  Pass ``z=1`` for a unit-norm model.
    """
    tensor = merged.tensor if isinstance(merged, MergedCore) else np.asarray(merged)
    n = cache.n_samples
    grad = (2.0 / z) * tensor
    for (a, b), m in cache.window_masks().items():
        if not np.any(m):
            continue
        left, right = cache.left[m], cache.right[m]
        psi = np.einsum("ij,jk,ik->i", left, tensor[:, a, b, :], right)
        bad = np.flatnonzero(np.abs(psi) < AMP_FLOOR)
        if bad.size:
            raise SingularAmplitudeError(np.flatnonzero(m)[bad[0]])
        grad[:, a, b, :] -= (2.0 / n) * (left / psi[:, None]).T @ right
    return grad


def _window_nll(cache, tensor, z):
    psi = cache.psi(tensor)
    bad = np.flatnonzero(np.abs(psi) < AMP_FLOOR)
    if bad.size:
        raise SingularAmplitudeError(bad[0])
    return float(-2.0 * np.mean(np.log(np.abs(psi))) + np.log(z))


def _schedule(d):
    forward = [(k, "right") for k in range(d - 1)]
    backward = [(k, "left") for k in range(d - 2, -1, -1)]
    return forward + backward


def _umps_sd_update(cache, merged, config):
    x = unfold_k(merged, 2)
    point = lift(x, config.r_max)
    grad = euclidean_grad(cache, merged, z=1.0)
    tangent = riemannian_grad(point, unfold_k(grad, 2), config.omega)
    moved = retract(point, tangent, config.theta)
    return fold_k(moved.x, merged.shape, 2)


def _baseline_update(cache, merged, config):
    z = float(np.sum(merged**2))
    grad = euclidean_grad(cache, merged, z=z)
    stepped = merged - config.theta * grad
    nrm = np.linalg.norm(stepped)
    if nrm < AMP_FLOOR:
        raise FloatingPointError("gradient step annihilated the window tensor; reduce theta")
    return stepped / nrm


def umps_sd_fit(mps, dataset, config, callback=None):
    """Train by space-decoupled Riemannian descent; Z stays 1 at every step."""
    return _sweep_fit(mps, dataset, config, _umps_sd_update, enforce_unit=True, callback=callback)


def baseline_gd_fit(mps, dataset, config, callback=None):
    """Train by projected Euclidean gradient descent with truncated splits."""
    return _sweep_fit(mps, dataset, config, _baseline_update, enforce_unit=False, callback=callback)


def _sweep_fit(mps, dataset, config, update, enforce_unit, callback):
    bits = dataset_bits(dataset)
    d = mps.d
    if bits.shape[1] != d:
        raise ValueError(f"dataset length {bits.shape[1]} != chain length {d}")
    work = mps if (mps.gauge.kind == CENTER and mps.gauge.site == 0) else canonicalize(mps, 0)
    z0 = partition_function(work)
    if abs(z0 - 1.0) > UNIT_NORM_TOL:
        raise GaugeDriftError(f"trainer expects a unit-norm model, got Z = {z0:.9f}")

    cores = [c.copy() for c in work.cores]
    cache = EnvCache.build(cores, bits, k=0)
    schedule = _schedule(d)
    trace = TrainTrace()
    t0 = perf_counter()
    prev_loop_nll = None
    step = 0

    for loop in range(1, config.l_max + 1):
        loop_nll = None
        for pos, (k, direction) in enumerate(schedule):
            merged = contract_pair(cores[k], cores[k + 1])
            try:
                new_merged = update(cache, merged, config)
            except SingularAmplitudeError as err:
                raise SingularAmplitudeError(
                    err.sample_index,
                    f"sample {err.sample_index} hit zero amplitude at loop {loop}, bond {k}",
                ) from err
            if not np.all(np.isfinite(new_merged)):
                raise FloatingPointError(f"non-finite window tensor at loop {loop}, bond {k}")
            cores[k], cores[k + 1] = split_merged_tensor(
                new_merged, direction, max_rank=config.r_max
            )
            post = contract_pair(cores[k], cores[k + 1])
            z = float(np.sum(post**2))
            if enforce_unit and abs(z - 1.0) > UNIT_NORM_TOL:
                raise GaugeDriftError(f"|Z - 1| = {abs(z - 1.0):.3e} at loop {loop}, bond {k}")

            step += 1
            last_of_loop = pos == len(schedule) - 1
            if last_of_loop or step % config.log_every == 0:
                row_nll = _window_nll(cache, post, z)
                interior = [c.shape[2] for c in cores[:-1]]
                trace.append(
                    TraceRow(
                        loop=loop,
                        site=k + 1,
                        direction="R" if direction == "right" else "L",
                        nll=row_nll,
                        elapsed_s=perf_counter() - t0,
                        r_mean=float(np.mean(interior)),
                        r_max=int(max(interior)),
                        z=z,
                    )
                )
                if last_of_loop:
                    loop_nll = row_nll
            if callback is not None:
                gauge = Gauge.center(k + 1 if direction == "right" else k)
                callback(loop, k, direction, Mps(tuple(c.copy() for c in cores), gauge))
            if not last_of_loop:
                next_k = schedule[pos + 1][0]
                if next_k != k:
                    advance_env(cache, cores, next_k)
        if prev_loop_nll is not None and abs(prev_loop_nll - loop_nll) < LOOP_PLATEAU_TOL:
            break
        prev_loop_nll = loop_nll

    return Mps(tuple(cores), Gauge.center(0)), trace
