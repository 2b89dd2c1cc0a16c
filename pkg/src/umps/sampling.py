"""Exact autoregressive sampling and conditional completion.

For a unit-norm chain gauged so that every core left of the last one is
left-canonical, the marginal of a suffix is the squared norm of its
partial matrix product, so bits can be drawn one by one from the exact
conditionals -- no Markov chain, no partition-function estimate.

Known bits interleave with unknown ones through ladder environments: on
the side of the chain that is still to be visited, free sites contribute
their summed transfer matrix and pinned sites only their fixed slice.
Until the first pin that environment is the identity (that is what the
canonical gauge buys), so unconditioned sampling never materializes it.

Running products are renormalized per step: the conditional ratios are
scale-invariant, and without the rescaling the raw marginals underflow
for long chains.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import GaugeDriftError, GaugeError, ImpossibleEvidenceError
from .mps import CENTER, canonicalize, partition_function

PROB_FLOOR = 1e-300
UNIT_NORM_TOL = 1e-6

RIGHT_TO_LEFT = "right_to_left"
LEFT_TO_RIGHT = "left_to_right"


@dataclass(frozen=True)
class SampleRequest:
    """How many strings to draw, from what seed, with which bits pinned.

    ``condition`` maps 0-based site indices to fixed bits.  ``direction``
    selects the sweep order; both give the exact model distribution.
    """

    count: int = 1
    seed: int | None = None
    condition: dict = field(default_factory=dict)
    direction: str = RIGHT_TO_LEFT

    def __post_init__(self):
        if self.count < 1:
            raise ValueError(f"count must be >= 1, got {self.count}")
        if self.direction not in (RIGHT_TO_LEFT, LEFT_TO_RIGHT):
            raise ValueError(f"unknown direction {self.direction!r}")
        for site, bit in self.condition.items():
            if bit not in (0, 1):
                raise ValueError(f"condition at site {site} must be 0 or 1, got {bit!r}")

    def validated_condition(self, d):
        cond = {int(s): int(b) for s, b in self.condition.items()}
        for site in cond:
            if not 0 <= site < d:
                raise ValueError(f"condition site {site} out of range 0..{d - 1}")
        return cond


def _left_ladders(cores, cond):
    """envs[i] contracts sites 0..i-1 with pins applied; None = identity.

    Valid when the unpinned prefix cores are left-canonical, which makes
    the environment exactly the identity until the first pinned site.
    """
    d = len(cores)
    envs = [None] * d
    env = None
    for j in range(d - 1):
        core = cores[j]
        if env is None and j not in cond:
            continue  # still the identity
        mat = np.eye(core.shape[0]) if env is None else env
        if j in cond:
            slab = core[:, cond[j], :]
            env = slab.T @ mat @ slab
        else:
            env = sum(core[:, b, :].T @ mat @ core[:, b, :] for b in (0, 1))
        envs[j + 1] = env
    return envs


def _right_ladders(cores, cond):
    """envs[i] contracts sites i+1..d-1 with pins applied; None = identity."""
    d = len(cores)
    envs = [None] * d
    env = None
    for j in range(d - 1, 0, -1):
        core = cores[j]
        if env is None and j not in cond:
            continue
        mat = np.eye(core.shape[2]) if env is None else env
        if j in cond:
            slab = core[:, cond[j], :]
            env = slab @ mat @ slab.T
        else:
            env = sum(core[:, b, :] @ mat @ core[:, b, :].T for b in (0, 1))
        envs[j - 1] = env
    return envs


def _weights(u, env):
    """Per-row probability weight u env u^T (env None = identity)."""
    if env is None:
        w = np.einsum("ij,ij->i", u, u)
    else:
        w = np.einsum("ij,jk,ik->i", u, env, u)
    return np.maximum(w, 0.0)


def sample(mps, req):
    """Draw ``req.count`` bit strings, returned as a (count, d) uint8 array.

    Deterministic for a fixed seed; pinned sites consume no randomness.
    """
    z = partition_function(mps)
    if abs(z - 1.0) > UNIT_NORM_TOL:
        raise GaugeDriftError(f"sampling requires a unit-norm model, got Z = {z:.9f}")
    d = mps.d
    cond = req.validated_condition(d)
    rng = np.random.default_rng(req.seed)
    if req.direction == RIGHT_TO_LEFT:
        gauged = canonicalize(mps, d - 1)
        sites = range(d - 1, -1, -1)
        envs = _left_ladders(gauged.cores, cond)
        slab = lambda core, b: core[:, b, :].T
    else:
        gauged = canonicalize(mps, 0)
        sites = range(d)
        envs = _right_ladders(gauged.cores, cond)
        slab = lambda core, b: core[:, b, :]

    bits = np.empty((req.count, d), dtype=np.uint8)
    state = np.ones((req.count, 1))
    for i in sites:
        core = gauged.cores[i]
        env = envs[i]
        if i in cond:
            b = cond[i]
            nxt = state @ slab(core, b)
            w = _weights(nxt, env)
            if np.any(w < PROB_FLOOR):
                raise ImpossibleEvidenceError(
                    f"pinned bit {b} at site {i} has zero probability given the other pins"
                )
            bits[:, i] = b
        else:
            cand0 = state @ slab(core, 0)
            cand1 = state @ slab(core, 1)
            w0 = _weights(cand0, env)
            w1 = _weights(cand1, env)
            total = w0 + w1
            if np.any(total < PROB_FLOOR):
                raise ImpossibleEvidenceError(
                    f"all outcomes at site {i} have zero probability given the pins"
                )
            drawn = (rng.random(req.count) >= w0 / total).astype(np.uint8)
            bits[:, i] = drawn
            sel = drawn == 1
            nxt = np.where(sel[:, None], cand1, cand0)
            w = np.where(sel, w1, w0)
        state = nxt / np.sqrt(w)[:, None]
    return bits


def marginal(mps, suffix):
    """Probability of the trailing bits ``suffix`` (sites d-len .. d-1).

    Requires every core left of the suffix to be left-canonical, i.e. a
    gauge center at or beyond the suffix start.  An empty suffix returns
    the partition function.
    """
    suffix = np.asarray(
        [int(b) for b in suffix] if isinstance(suffix, str) else suffix, dtype=np.int64
    )
    d = mps.d
    if suffix.size > d:
        raise ValueError(f"suffix of length {suffix.size} longer than chain ({d})")
    if suffix.size and not np.all((suffix == 0) | (suffix == 1)):
        raise ValueError("suffix contains non-binary symbols")
    if suffix.size == 0:
        return partition_function(mps)
    start = d - suffix.size
    g = mps.gauge
    if not (g.kind == CENTER and g.site >= start):
        raise GaugeError(
            f"marginal over sites {start}..{d - 1} needs left-canonical cores "
            f"0..{start - 1}; canonicalize to a center >= {start} first"
        )
    vec = np.ones(1)
    for offset, b in enumerate(reversed(suffix)):
        core = mps.cores[d - 1 - offset]
        vec = core[:, int(b), :] @ vec
    return float(vec @ vec)


def reconstruct(mps, known, seed=None):
    """Complete a partially observed string by exact conditional sampling.

    ``known`` maps 0-based sites to pinned bits; the rest are drawn from
    P(unknown | known).  With an empty ``known`` this is exactly one
    unconditioned sample (same seed, same output).
    """
    req = SampleRequest(count=1, seed=seed, condition=dict(known))
    return sample(mps, req)[0]
