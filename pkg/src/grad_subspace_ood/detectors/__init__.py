"""
OOD score functions on gradient (or feature) embeddings.
"""

from grad_subspace_ood.detectors.artifact import (
    decode_detector,
    encode_detector,
    load_detector,
    save_detector,
)
from grad_subspace_ood.detectors.base import (
    HEAD_KINDS,
    FittedDetector,
    clip_config_for,
    fit_detector,
)
from grad_subspace_ood.detectors.clipping import (
    ClipConfig,
    ClipState,
    clip_bats,
    clip_react,
    clip_tail,
    fit_react_threshold,
)
from grad_subspace_ood.detectors.distance import (
    KnnModel,
    MahaModel,
    fit_maha,
    knn_scores,
    maha_scores,
    score_knn,
    score_maha,
)
from grad_subspace_ood.detectors.head import (
    LinearHead,
    TrainedHead,
    fit_clip_state,
    head_accuracy,
    head_logits,
    model_output_head,
    train_head,
)
from grad_subspace_ood.detectors.scores import (
    Decision,
    Score,
    classify,
    energy_scores,
    ensemble_scores,
    msp_scores,
    score_energy,
    score_ensemble,
    score_msp,
)

__all__ = [
    "HEAD_KINDS",
    "ClipConfig",
    "ClipState",
    "Decision",
    "FittedDetector",
    "KnnModel",
    "LinearHead",
    "MahaModel",
    "Score",
    "TrainedHead",
    "classify",
    "clip_bats",
    "clip_config_for",
    "clip_react",
    "clip_tail",
    "decode_detector",
    "encode_detector",
    "energy_scores",
    "ensemble_scores",
    "fit_clip_state",
    "fit_detector",
    "fit_maha",
    "fit_react_threshold",
    "head_accuracy",
    "head_logits",
    "knn_scores",
    "load_detector",
    "maha_scores",
    "model_output_head",
    "msp_scores",
    "save_detector",
    "score_energy",
    "score_ensemble",
    "score_knn",
    "score_maha",
    "score_msp",
    "train_head",
]
