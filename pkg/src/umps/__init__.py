"""Generative modeling with unit-norm matrix product states.

The chain is trained by two-site sweeps; the manifold trainer keeps the
model exactly normalized and rank-bounded at every step, so sampling and
likelihoods never need an explicit partition function.
"""

__version__ = "0.1.0"

from .data import (
    BinaryDataset,
    BinaryImage,
    bas_generate,
    binarize,
    flatten,
    is_bas_pattern,
    load_dataset_text,
    load_idx,
    load_model,
    save_dataset_text,
    save_model,
    unflatten,
    write_pgm,
)
from .errors import (
    GaugeDriftError,
    GaugeError,
    IdxFormatError,
    ImpossibleEvidenceError,
    ModelFormatError,
    SingularAmplitudeError,
    UmpsError,
)
from .estimator import MpsGenerativeModel
from .manifold import MhPoint, TangentRep, check_transversal, lift, metric, retract, riemannian_grad
from .mps import (
    Gauge,
    MergedCore,
    Mps,
    amplitude,
    amplitudes,
    canonicalize,
    check_canonical,
    merge,
    partition_function,
    random_init,
    split,
)
from .sampling import SampleRequest, marginal, reconstruct, sample
from .train import (
    EnvCache,
    TrainConfig,
    TrainTrace,
    advance_env,
    baseline_gd_fit,
    euclidean_grad,
    nll,
    umps_sd_fit,
)

__all__ = [
    "BinaryDataset",
    "BinaryImage",
    "EnvCache",
    "Gauge",
    "GaugeDriftError",
    "GaugeError",
    "IdxFormatError",
    "ImpossibleEvidenceError",
    "MergedCore",
    "MhPoint",
    "ModelFormatError",
    "Mps",
    "MpsGenerativeModel",
    "SampleRequest",
    "SingularAmplitudeError",
    "TangentRep",
    "TrainConfig",
    "TrainTrace",
    "UmpsError",
    "advance_env",
    "amplitude",
    "amplitudes",
    "bas_generate",
    "baseline_gd_fit",
    "binarize",
    "canonicalize",
    "check_canonical",
    "check_transversal",
    "euclidean_grad",
    "flatten",
    "is_bas_pattern",
    "lift",
    "load_dataset_text",
    "load_idx",
    "load_model",
    "marginal",
    "merge",
    "metric",
    "nll",
    "partition_function",
    "random_init",
    "reconstruct",
    "retract",
    "riemannian_grad",
    "sample",
    "save_dataset_text",
    "save_model",
    "split",
    "umps_sd_fit",
    "unflatten",
    "write_pgm",
]
