"""
Deterministic SGD training of the classifier.

Cross-entropy with optional label smoothing, momentum SGD, seeded shuffling.
Gradients come from the same reverse sweep used for energy gradients, seeded
with the cross-entropy logit cotangent (p − t)/B.
"""

from dataclasses import dataclass, field

import numpy as np

from grad_subspace_ood.config.config import TrainConfig
from grad_subspace_ood.micronet.autodiff import record_tape, reverse_sweep
from grad_subspace_ood.micronet.model import (
    ModelSpec,
    ParamVector,
    SampleBatch,
    init_params,
)
from grad_subspace_ood.utils.errors import UsageError
from grad_subspace_ood.utils.logger import logger


@dataclass(frozen=True)
class TrainedClassifier:
    """Final parameters with the training summary."""

    params: ParamVector
    train_accuracy: float
    loss_history: list[float] = field(default_factory=list)


def smoothed_targets(
    labels: np.ndarray, num_classes: int, smoothing: float
) -> np.ndarray:
    """One-hot targets mixed with the uniform distribution."""
    targets = np.full((labels.size, num_classes), smoothing / num_classes)
    targets[np.arange(labels.size), labels] += 1.0 - smoothing
    return targets


def accuracy(spec: ModelSpec, params: ParamVector, data: SampleBatch) -> float:
    """Fraction of rows whose argmax logit equals the label."""
    if data.labels is None:
        raise UsageError("accuracy needs labels")
    layers = params.unpack(spec)
    logits = record_tape(layers, data.inputs).logits
    return float(np.mean(np.argmax(logits, axis=1) == data.labels))


def train_classifier(
    spec: ModelSpec, data: SampleBatch, config: TrainConfig
) -> TrainedClassifier:
    """
    Train a classifier from a seeded initialization.

    Args:
        spec: Architecture to train
        data: Labelled training data
        config: lr, momentum, epochs, batch_size, seed, label_smoothing

    Returns:
        TrainedClassifier: Final parameters and training accuracy

    Raises:
        UsageError: If labels are missing or epochs < 1
    """
    if data.labels is None:
        raise UsageError("train_classifier needs labelled data")
    if config.epochs < 1:
        raise UsageError(f"epochs must be at least 1, got {config.epochs}")
    data.check_against(spec)

    rng = np.random.default_rng(config.seed)
    params = init_params(spec, config.seed)
    theta = params.values.copy()
    velocity = np.zeros_like(theta)
    targets = smoothed_targets(data.labels, spec.num_classes, config.label_smoothing)
    n = len(data)
    loss_history: list[float] = []

    logger.info(
        f"Training {spec.layer_dims} ({spec.num_params} params) on {n} samples "
        f"for {config.epochs} epochs"
    )
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            rows = order[start : start + config.batch_size]
            layers = ParamVector(theta, params.manifest).unpack(spec)
            tape = record_tape(layers, data.inputs[rows])
            batch_targets = targets[rows]
            log_probs = np.log(np.clip(tape.probs, 1e-300, None))
            epoch_loss += float(-np.sum(batch_targets * log_probs))
            seed = ((tape.probs - batch_targets) / rows.size)[:, None, :]
            grad = reverse_sweep(spec, layers, tape, seed, per_sample=False)[0]
            velocity = config.momentum * velocity + grad
            theta = theta - config.lr * velocity
        loss_history.append(epoch_loss / n)
        logger.debug(f"epoch {epoch + 1}/{config.epochs} loss {loss_history[-1]:.6f}")

    final = ParamVector.for_spec(spec, theta)
    train_accuracy = accuracy(spec, final, data)
    logger.info(f"Final training accuracy: {train_accuracy:.4f}")
    return TrainedClassifier(final, train_accuracy, loss_history)
