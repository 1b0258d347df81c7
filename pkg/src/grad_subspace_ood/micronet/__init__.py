"""
Minimal fully-connected classifier with the differentiation primitives every
gradient extraction builds on.
"""

from grad_subspace_ood.micronet.artifact import ModelArtifact, load_model, save_model
from grad_subspace_ood.micronet.autodiff import (
    forward,
    param_jvp,
    param_vjp,
    penultimate_features,
    per_sample_energy_gradient,
    per_sample_energy_gradients,
)
from grad_subspace_ood.micronet.model import (
    ModelSpec,
    ParamVector,
    SampleBatch,
    SliceEntry,
    init_params,
)
from grad_subspace_ood.micronet.training import TrainedClassifier, train_classifier

__all__ = [
    "ModelArtifact",
    "ModelSpec",
    "ParamVector",
    "SampleBatch",
    "SliceEntry",
    "TrainedClassifier",
    "forward",
    "init_params",
    "load_model",
    "param_jvp",
    "param_vjp",
    "penultimate_features",
    "per_sample_energy_gradient",
    "per_sample_energy_gradients",
    "save_model",
    "train_classifier",
]
