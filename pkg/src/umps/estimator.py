"""Scikit-learn style front end for the chain generative model.

Wraps the functional training/sampling API in a fit/sample/score
estimator so the model composes with pipelines, ``clone``, and grid
search.  ``X`` is an (n_samples, n_features) binary matrix; features are
chain sites in flattening order.
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .mps import amplitudes, partition_function, random_init
from .sampling import SampleRequest, sample
from .train import TrainConfig, baseline_gd_fit, umps_sd_fit

ALGORITHMS = ("umps-sd", "baseline")


class MpsGenerativeModel(BaseEstimator):
    """Born-rule generative model over binary strings.

    Parameters
    ----------
    r_max : int
        Bond-dimension bound of the chain.
    theta : float
        Constant learning rate of the two-site updates.
    l_max : int
        Maximum number of sweep loops.
    omega : float
        Weight of the tangent metric used by the manifold trainer.
    algorithm : {'umps-sd', 'baseline'}
        Manifold (norm-preserving) or projected-gradient training.
    random_state : int or None
        Seed for the chain initialization.
    log_every : int
        Site updates between trace rows.

    Attributes
    ----------
    mps_ : Mps
        The trained chain.
    trace_ : TrainTrace
        Per-site training log (NLL, timing, bond dimensions, Z).
    nll_ : float
        Final training negative log-likelihood.
    n_features_in_ : int
        Number of sites d.
    """

    def __init__(
        self,
        r_max=8,
        theta=0.01,
        l_max=10,
        omega=1.0,
        algorithm="umps-sd",
        random_state=0,
        log_every=1,
    ):
        self.r_max = r_max
        self.theta = theta
        self.l_max = l_max
        self.omega = omega
        self.algorithm = algorithm
        self.random_state = random_state
        self.log_every = log_every

    def _validate_bits(self, X, n_features=None):
        X = check_array(X)
        if np.any((X != 0) & (X != 1)):
            raise ValueError("X must be a binary matrix")
        if n_features is not None and X.shape[1] != n_features:
            raise ValueError(f"X has {X.shape[1]} features, the model expects {n_features}")
        return X.astype(np.uint8)

    def fit(self, X, y=None):
        """Train the chain on binary rows of ``X`` (``y`` is ignored)."""
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        bits = self._validate_bits(X)
        if bits.shape[1] < 2:
            raise ValueError("the chain needs at least 2 features")
        config = TrainConfig(
            r_max=self.r_max,
            theta=self.theta,
            l_max=self.l_max,
            omega=self.omega,
            seed=self.random_state,
            log_every=self.log_every,
        )
        init = random_init(bits.shape[1], config.r_max, config.seed)
        fit_fn = umps_sd_fit if self.algorithm == "umps-sd" else baseline_gd_fit
        self.mps_, self.trace_ = fit_fn(init, bits, config)
        self.nll_ = self.trace_.final_nll
        self.n_features_in_ = bits.shape[1]
        return self

    def score_samples(self, X):
        """Log-probability ln P(v) of each row (-inf for zero amplitude)."""
        check_is_fitted(self, "mps_")
        bits = self._validate_bits(X, self.n_features_in_)
        psi = amplitudes(self.mps_, bits)
        with np.errstate(divide="ignore"):
            return 2.0 * np.log(np.abs(psi)) - np.log(partition_function(self.mps_))

    def score(self, X, y=None):
        """Mean log-likelihood of ``X`` (the negative of the training objective)."""
        return float(np.mean(self.score_samples(X)))

    def sample(self, n_samples=1, random_state=None, condition=None):
        """Draw exact samples; ``condition`` pins {site: bit} before drawing."""
        check_is_fitted(self, "mps_")
        req = SampleRequest(
            count=n_samples, seed=random_state, condition=dict(condition or {})
        )
        return sample(self.mps_, req)
