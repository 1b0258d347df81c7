"""
Fitted detectors of every kind behind one batch-scoring interface.
"""

from dataclasses import dataclass

import numpy as np

from grad_subspace_ood.config.config import ClipMethod, DetectorConfig, DetectorKind
from grad_subspace_ood.detectors.clipping import ClipConfig, ClipState
from grad_subspace_ood.detectors.distance import (
    KnnModel,
    MahaModel,
    fit_maha,
    knn_scores,
    maha_scores,
)
from grad_subspace_ood.detectors.head import (
    LinearHead,
    TrainedHead,
    fit_clip_state,
    head_accuracy,
    head_logits,
    train_head,
)
from grad_subspace_ood.detectors.scores import energy_scores, msp_scores
from grad_subspace_ood.micronet.model import FloatArray
from grad_subspace_ood.utils.errors import ConfigurationError
from grad_subspace_ood.utils.logger import logger
from grad_subspace_ood.utils.parallel import chunk_slices, ordered_map

HEAD_KINDS = frozenset(
    {DetectorKind.MSP, DetectorKind.ENERGY, DetectorKind.REACT, DetectorKind.BATS}
)

_CLIP_METHODS = {
    DetectorKind.REACT: ClipMethod.REACT,
    DetectorKind.BATS: ClipMethod.BATS,
}


def clip_config_for(config: DetectorConfig, k: int) -> ClipConfig:
    """Clip settings of a detector config, with d capped to K."""
    return ClipConfig(
        method=_CLIP_METHODS.get(config.kind, ClipMethod.NONE),
        tail_dims=min(config.tail_dims, k),
        percentile=config.react_percentile,
        bats_lambda=config.bats_lambda,
    )


@dataclass(frozen=True)
class FittedDetector:
    """
    Immutable fitted state of one detector.

    Head kinds (msp, energy, react, bats) carry ``head`` and the clipping
    setup. The head is either trained on gradient embeddings or the
    classifier's own output layer over penultimate features. maha carries
    ``maha`` and knn carries ``knn``. ReAct and BATS score the rectified
    logits with the energy score.
    """

    kind: DetectorKind
    k: int
    temperature: float = 1.0
    head: LinearHead | None = None
    clip: ClipConfig | None = None
    clip_state: ClipState | None = None
    maha: MahaModel | None = None
    knn: KnnModel | None = None
    train_accuracy: float | None = None
    heldout_accuracy: float | None = None

    def score_block(self, embeddings: FloatArray) -> FloatArray:
        """Scores of one block of (n, K) embeddings."""
        if self.kind in HEAD_KINDS and self.head is not None:
            logits = head_logits(self.head, embeddings, self.clip, self.clip_state)
            if self.kind == DetectorKind.MSP:
                return msp_scores(logits)
            return energy_scores(logits, self.temperature)
        if self.kind == DetectorKind.MAHA and self.maha is not None:
            return maha_scores(self.maha, embeddings)
        if self.kind == DetectorKind.KNN and self.knn is not None:
            return knn_scores(self.knn, embeddings)
        raise ConfigurationError(f"{self.kind.value} detector is missing its state")

    def score(
        self,
        embeddings: FloatArray,
        chunk_size: int = 256,
        threads: int = 1,
    ) -> FloatArray:
        """
        Score every row of ``embeddings``.

        Blocks may run on several threads; results keep row order.
        """
        g = np.asarray(embeddings, dtype=np.float64)
        if g.ndim != 2 or g.shape[1] != self.k:
            raise ConfigurationError(
                f"{self.kind.value} detector expects width {self.k}, got {g.shape}"
            )
        if g.shape[0] == 0:
            return np.empty(0)
        blocks = ordered_map(
            lambda rows: self.score_block(g[rows]),
            chunk_slices(g.shape[0], chunk_size),
            threads,
        )
        return np.concatenate(blocks)


def fit_detector(
    config: DetectorConfig,
    embeddings: FloatArray,
    labels: np.ndarray,
    num_classes: int | None = None,
    heldout: tuple[FloatArray, np.ndarray] | None = None,
    head: LinearHead | None = None,
) -> FittedDetector:
    """
    Fit the detector named by ``config.kind`` on training embeddings.

    Head kinds train an auxiliary head unless ``head`` is given; a given head
    is used as is and only its clipping state is fitted.

    Args:
        config: Detector settings
        embeddings: (n, K) training embeddings
        labels: Training labels
        num_classes: C; defaults to max(label) + 1
        heldout: Optional held-out (embeddings, labels) for head accuracy
        head: Fixed head for head kinds, e.g. the classifier's output layer

    Returns:
        FittedDetector: Immutable fitted state
    """
    x = np.asarray(embeddings, dtype=np.float64)
    if x.ndim != 2:
        raise ConfigurationError(f"expected (n, K) embeddings, got {x.shape}")
    k = x.shape[1]
    kind = config.kind

    if kind in HEAD_KINDS:
        if head is None:
            trained = train_head(x, labels, config.head, num_classes, heldout)
        else:
            if head.k != k:
                raise ConfigurationError(
                    f"fixed head expects width {head.k}, embeddings have {k}"
                )
            trained = TrainedHead(
                head,
                head_accuracy(head, x, labels),
                head_accuracy(head, *heldout) if heldout is not None else None,
            )
        clip = clip_config_for(config, k)
        detector = FittedDetector(
            kind=kind,
            k=k,
            temperature=config.temperature,
            head=trained.head,
            clip=clip,
            clip_state=fit_clip_state(trained.head, x, clip),
            train_accuracy=trained.train_accuracy,
            heldout_accuracy=trained.heldout_accuracy,
        )
    elif kind == DetectorKind.MAHA:
        detector = FittedDetector(
            kind=kind,
            k=k,
            maha=fit_maha(
                x, labels, config.ridge_scale, config.covariance, num_classes
            ),
        )
    else:
        detector = FittedDetector(
            kind=kind, k=k, knn=KnnModel(x, config.knn_k, config.knn_normalize)
        )
    logger.info(f"Fitted {kind.value} detector on {x.shape[0]} embeddings, K={k}")
    return detector
