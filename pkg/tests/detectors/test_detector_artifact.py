"""
Tests for fitted detectors and their artifacts.
"""

from pathlib import Path

import numpy as np
import pytest

from grad_subspace_ood.config.config import DetectorConfig, DetectorKind, HeadConfig
from grad_subspace_ood.detectors.artifact import (
    decode_detector,
    encode_detector,
    load_detector,
    save_detector,
)
from grad_subspace_ood.detectors.base import HEAD_KINDS, fit_detector
from grad_subspace_ood.detectors.head import model_output_head
from grad_subspace_ood.micronet.autodiff import penultimate_features
from grad_subspace_ood.storage.container import read_sidecar
from grad_subspace_ood.utils.errors import ConfigurationError, FormatError


@pytest.fixture
def embeddings() -> tuple[np.ndarray, np.ndarray]:
    """Three noisy clusters in six dimensions."""
    gen = np.random.default_rng(3)
    centers = 3.0 * np.eye(3, 6)
    labels = np.repeat(np.arange(3), 40)
    return centers[labels] + 0.4 * gen.standard_normal((120, 6)), labels


def _config(kind: DetectorKind) -> DetectorConfig:
    return DetectorConfig(
        kind=kind, tail_dims=2, knn_k=3, head=HeadConfig(epochs=2, batch_size=32)
    )


@pytest.mark.unit
@pytest.mark.parametrize("kind", list(DetectorKind))
def test_scoring_is_chunk_and_thread_invariant(kind, embeddings) -> None:
    """
    Block size and thread count do not change the scores.

    Args:
        kind: Detector kind under test
        embeddings: Labelled training embeddings

    Returns:
        None: Verifies matching scores across schedules
    """
    x, y = embeddings
    detector = fit_detector(_config(kind), x, y)
    whole = detector.score(x, chunk_size=1000)
    assert whole.shape == (120,)
    np.testing.assert_allclose(
        detector.score(x, chunk_size=7, threads=3), whole, rtol=1e-12, atol=1e-12
    )
    with pytest.raises(ConfigurationError):
        detector.score(np.zeros((2, 5)))


@pytest.mark.unit
@pytest.mark.parametrize("kind", list(DetectorKind))
def test_detector_round_trip(kind, embeddings, tmp_path: Path) -> None:
    """
    A saved detector loads back and scores like the original.

    Args:
        kind: Detector kind under test
        embeddings: Labelled training embeddings
        tmp_path: Temporary directory

    Returns:
        None: Verifies kind, scores and byte-stable re-encoding
    """
    x, y = embeddings
    detector = fit_detector(_config(kind), x, y)
    path = tmp_path / f"{kind.value}.gsdet"
    save_detector(detector, path, {"detector": {"kind": kind.value}})
    loaded = load_detector(path)
    assert loaded.kind == kind and loaded.k == detector.k
    assert encode_detector(loaded) == path.read_bytes()
    np.testing.assert_allclose(loaded.score(x), detector.score(x), rtol=1e-4, atol=1e-4)
    assert read_sidecar(path)["kind"] == kind.value


@pytest.mark.unit
@pytest.mark.parametrize("kind", sorted(HEAD_KINDS, key=lambda k: k.value))
def test_output_layer_detector_round_trip(kind, random_model, tmp_path: Path) -> None:
    """
    Detectors on the model's output layer keep BN switched off after reload.

    Args:
        kind: Head detector kind under test
        random_model: Factory for small random models
        tmp_path: Temporary directory

    Returns:
        None: Verifies the normalize flag, scores and byte-stable re-encoding
    """
    spec, params, batch = random_model(5, layer_dims=[3, 6, 5, 3], n=40)
    features = penultimate_features(spec, params, batch)
    head = model_output_head(spec, params)
    detector = fit_detector(
        _config(kind), features, batch.labels, spec.num_classes, head=head
    )
    path = tmp_path / f"forward_{kind.value}.gsdet"
    save_detector(detector, path)
    loaded = load_detector(path)
    assert loaded.head is not None and not loaded.head.normalize
    assert encode_detector(loaded) == path.read_bytes()
    np.testing.assert_allclose(
        loaded.score(features), detector.score(features), rtol=1e-4, atol=1e-4
    )


@pytest.mark.unit
def test_corrupt_detector(embeddings, tmp_path: Path) -> None:
    """
    Truncated or bit-flipped detector files are format errors.

    Returns:
        None: Verifies the CRC guard
    """
    x, y = embeddings
    data = encode_detector(fit_detector(_config(DetectorKind.KNN), x, y))
    with pytest.raises(FormatError):
        decode_detector(data[:-10])
    flipped = bytearray(data)
    flipped[20] ^= 0x80
    with pytest.raises(FormatError, match="CRC"):
        decode_detector(bytes(flipped))
    with pytest.raises(FormatError):
        load_detector(tmp_path / "absent.gsdet")


@pytest.mark.unit
def test_head_detector_reports_accuracy(embeddings) -> None:
    """
    Head-based detectors carry train and held-out accuracy.

    Returns:
        None: Verifies accuracies on well-separated clusters
    """
    x, y = embeddings
    detector = fit_detector(
        _config(DetectorKind.ENERGY), x, y, heldout=(x[::2], y[::2])
    )
    assert detector.train_accuracy is not None and detector.train_accuracy > 0.9
    assert detector.heldout_accuracy is not None
