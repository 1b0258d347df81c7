"""
Linear heads: g → BN → Clip(tail) → FC → logits.

Gradient embeddings get a trained auxiliary head. Penultimate features reuse the
classifier's own output layer with BN switched off, so unclipped logits are the
classifier's logits.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import softmax

from grad_subspace_ood.config.config import ClipMethod, HeadConfig
from grad_subspace_ood.detectors.clipping import (
    ClipConfig,
    ClipState,
    clip_tail,
    fit_react_threshold,
)
from grad_subspace_ood.micronet.model import FloatArray, ModelSpec, ParamVector
from grad_subspace_ood.utils.errors import ConfigurationError, UsageError
from grad_subspace_ood.utils.logger import logger

_BN_FIELDS = ("bn_var", "bn_scale", "bn_shift")
_HEAD_FIELDS = ("bn_mean", *_BN_FIELDS, "fc_weight", "fc_bias")

# Floor for the BATS spread of features that never vary on ID data
_MIN_DELTA = 1e-12


@dataclass(frozen=True)
class LinearHead:
    """
    BatchNorm (frozen running stats) followed by a fully-connected layer.

    With ``normalize=False`` the BN stage is the identity and only the FC layer
    applies.
    """

    bn_mean: FloatArray
    bn_var: FloatArray
    bn_scale: FloatArray
    bn_shift: FloatArray
    fc_weight: FloatArray
    fc_bias: FloatArray
    bn_epsilon: float = 1e-5
    normalize: bool = True

    def __post_init__(self) -> None:
        for name in _HEAD_FIELDS:
            array = np.asarray(getattr(self, name), dtype=np.float64)
            if not np.all(np.isfinite(array)):
                raise UsageError(f"LinearHead.{name} must be finite")
            object.__setattr__(self, name, array)
        k = self.bn_mean.shape[0] if self.bn_mean.ndim == 1 else -1
        if k < 1 or any(getattr(self, name).shape != (k,) for name in _BN_FIELDS):
            raise ConfigurationError("BN vectors must share one length K")
        if self.fc_weight.ndim != 2 or self.fc_weight.shape[1] != k:
            raise ConfigurationError(
                f"fc_weight must be C x {k}, got {self.fc_weight.shape}"
            )
        if self.fc_bias.shape != (self.fc_weight.shape[0],):
            raise ConfigurationError("fc_bias length must equal C")
        if np.any(self.bn_var < 0):
            raise UsageError("bn_var must be non-negative")
        if not self.bn_epsilon > 0:
            raise UsageError("bn_epsilon must be positive")

    @property
    def k(self) -> int:
        return int(self.bn_mean.shape[0])

    @property
    def num_classes(self) -> int:
        return int(self.fc_weight.shape[0])

    def batch_norm(self, embeddings: FloatArray) -> FloatArray:
        """Inference-mode BN with the running statistics."""
        g = _as_rows(embeddings, self.k)
        if not self.normalize:
            return g
        normed = (g - self.bn_mean) / np.sqrt(self.bn_var + self.bn_epsilon)
        return normed * self.bn_scale + self.bn_shift


@dataclass(frozen=True)
class TrainedHead:
    """A fitted head with its accuracy on training and held-out embeddings."""

    head: LinearHead
    train_accuracy: float
    heldout_accuracy: float | None


def _as_rows(embeddings: FloatArray, k: int) -> FloatArray:
    g = np.asarray(embeddings, dtype=np.float64)
    if g.ndim == 1:
        g = g[None, :]
    if g.ndim != 2 or g.shape[1] != k:
        raise ConfigurationError(
            f"expected embeddings with K={k}, got shape {g.shape}"
        )
    return g


def head_logits(
    head: LinearHead,
    embeddings: FloatArray,
    clip: ClipConfig | None = None,
    clip_state: ClipState | None = None,
) -> FloatArray:
    """
    Logits of the head pipeline; clipping touches only the last d dimensions.

    Args:
        head: Fitted head
        embeddings: (K,) or (n, K) gradient embeddings
        clip: Tail clipping; ``None`` means no clipping
        clip_state: Fitted threshold (react) or boundaries (bats)

    Returns:
        FloatArray: (n, C) logits

    Raises:
        ConfigurationError: Embedding width does not match the head
        UsageError: Clip state missing for react or bats
    """
    normed = head.batch_norm(embeddings)
    if clip is not None:
        normed = clip_tail(normed, clip, clip_state)
    return normed @ head.fc_weight.T + head.fc_bias


def head_accuracy(
    head: LinearHead, embeddings: FloatArray, labels: np.ndarray
) -> float:
    logits = head_logits(head, embeddings)
    return float(np.mean(np.argmax(logits, axis=1) == np.asarray(labels)))


def train_head(
    embeddings: FloatArray,
    labels: np.ndarray,
    config: HeadConfig | None = None,
    num_classes: int | None = None,
    heldout: tuple[FloatArray, np.ndarray] | None = None,
) -> TrainedHead:
    """
    Train BN + FC with cross-entropy and momentum SGD.

    BN normalizes with mini-batch statistics during training and tracks
    running statistics with ``config.bn_momentum``; the running statistics
    start from the first mini-batch and are frozen afterwards.

    Args:
        embeddings: (n, K) training embeddings
        labels: Class per row
        config: Optimizer settings
        num_classes: C; defaults to max(label) + 1
        heldout: Optional (embeddings, labels) for a held-out accuracy

    Returns:
        TrainedHead: Head plus train and held-out accuracy

    Raises:
        UsageError: epochs < 1 or bad labels
        ConfigurationError: Embedding and label shapes disagree
    """
    config = config or HeadConfig()
    x = np.asarray(embeddings, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise ConfigurationError(
            f"expected (n, K) embeddings and n labels, got {x.shape} / {y.shape}"
        )
    if config.epochs < 1:
        raise UsageError(f"train_head needs epochs >= 1, got {config.epochs}")
    if not np.all(np.isfinite(x)):
        raise UsageError("embeddings must be finite")
    if y.size == 0 or y.min() < 0:
        raise UsageError("labels must be non-empty and non-negative")
    n, k = x.shape
    c = num_classes or int(y.max()) + 1
    if int(y.max()) >= c:
        raise UsageError(f"label {int(y.max())} out of range for {c} classes")

    rng = np.random.default_rng(config.seed)
    bound = 1.0 / np.sqrt(k)
    weight = rng.uniform(-bound, bound, size=(c, k))
    bias = rng.uniform(-bound, bound, size=c)
    scale = np.ones(k)
    shift = np.zeros(k)
    running_mean: FloatArray | None = None
    running_var = np.ones(k)
    velocity = [np.zeros_like(p) for p in (weight, bias, scale, shift)]
    onehot = np.eye(c)[y]
    eps, momentum = config.bn_epsilon, config.bn_momentum

    for epoch in range(config.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            rows = order[start : start + config.batch_size]
            batch, targets = x[rows], onehot[rows]
            b = len(rows)
            mu = batch.mean(axis=0)
            var = batch.var(axis=0)
            x_hat = (batch - mu) / np.sqrt(var + eps)
            h = x_hat * scale + shift
            probs = softmax(h @ weight.T + bias, axis=1)
            epoch_loss += float(-np.sum(targets * np.log(probs + 1e-300)))

            d_logits = (probs - targets) / b
            d_h = d_logits @ weight
            grads = (
                d_logits.T @ h,
                d_logits.sum(axis=0),
                (d_h * x_hat).sum(axis=0),
                d_h.sum(axis=0),
            )
            for param, vel, grad in zip((weight, bias, scale, shift), velocity, grads):
                vel *= config.momentum
                vel += grad
                param -= config.lr * vel

            unbiased = var * b / (b - 1) if b > 1 else var
            if running_mean is None:
                running_mean, running_var = mu.copy(), unbiased.copy()
            else:
                running_mean = (1 - momentum) * running_mean + momentum * mu
                running_var = (1 - momentum) * running_var + momentum * unbiased
        logger.debug(
            f"head epoch {epoch + 1}/{config.epochs}: loss {epoch_loss / n:.4f}"
        )

    head = LinearHead(
        bn_mean=running_mean if running_mean is not None else np.zeros(k),
        bn_var=running_var,
        bn_scale=scale,
        bn_shift=shift,
        fc_weight=weight,
        fc_bias=bias,
        bn_epsilon=eps,
    )
    train_acc = head_accuracy(head, x, y)
    heldout_acc = head_accuracy(head, *heldout) if heldout is not None else None
    logger.info(
        f"Trained linear head K={k} C={c}: train accuracy {train_acc:.4f}"
        + (f", held-out accuracy {heldout_acc:.4f}" if heldout_acc is not None else "")
    )
    return TrainedHead(head, train_acc, heldout_acc)


def model_output_head(spec: ModelSpec, params: ParamVector) -> LinearHead:
    """
    The classifier's output layer as a head over penultimate features.

    Args:
        spec: Model architecture
        params: Trained parameters

    Returns:
        LinearHead: Identity BN followed by the last layer's weight and bias
    """
    if params.size != spec.num_params:
        raise ConfigurationError(
            f"params have {params.size} values, spec needs {spec.num_params}"
        )
    last = params.unpack(spec)[-1]
    width = last.weight.shape[1]
    return LinearHead(
        bn_mean=np.zeros(width),
        bn_var=np.ones(width),
        bn_scale=np.ones(width),
        bn_shift=np.zeros(width),
        fc_weight=np.array(last.weight),
        fc_bias=np.array(last.bias),
        normalize=False,
    )


def fit_clip_state(
    head: LinearHead, id_embeddings: FloatArray, clip: ClipConfig
) -> ClipState | None:
    """
    Fit the clipping state of ``clip`` for this head.

    ReAct takes the percentile of post-BN tail values over the ID embeddings.
    BATS takes μ = bn_shift and δ = |bn_scale| of the tail dimensions; without
    BN it takes the mean and standard deviation of the ID tail values, with δ
    floored at 1e-12.
    """
    if clip.method == ClipMethod.NONE:
        return None
    if clip.tail_dims > head.k:
        raise ConfigurationError(f"tail_dims d={clip.tail_dims} exceeds K={head.k}")
    tail = slice(head.k - clip.tail_dims, head.k)
    if clip.method == ClipMethod.REACT:
        normed = head.batch_norm(id_embeddings)
        threshold = fit_react_threshold(normed[:, tail], clip.percentile)
        return ClipState(threshold=threshold)
    if not head.normalize:
        values = _as_rows(id_embeddings, head.k)[:, tail]
        return ClipState(
            mu=values.mean(axis=0), delta=np.maximum(values.std(axis=0), _MIN_DELTA)
        )
    return ClipState(mu=head.bn_shift[tail].copy(), delta=np.abs(head.bn_scale[tail]))
