"""
End-to-end tests of the evaluation pipeline on the bundled synthetic benchmark.

These train a classifier once per session and run full subspace extraction,
detector fitting and scoring, so they are marked slow.
"""

import numpy as np
import pytest
from scipy.special import softmax

from grad_subspace_ood.config.config import RunConfig
from grad_subspace_ood.evaluation.pipeline import (
    fit_subspace,
    run_pipeline,
    run_sweep,
)
from grad_subspace_ood.evaluation.reporting import render_report_json
from grad_subspace_ood.evaluation.synth import FAR_OOD, NEAR_OOD
from grad_subspace_ood.micronet.autodiff import forward
from grad_subspace_ood.micronet.training import accuracy
from grad_subspace_ood.subspace.artifact import load_subspace
from grad_subspace_ood.subspace.basis import spectrum
from grad_subspace_ood.utils.errors import UsageError

pytestmark = [pytest.mark.integration, pytest.mark.slow]


def _row(result, source: str, dataset: str):
    matches = [
        r
        for r in result.report.rows
        if r.source == source and r.dataset == dataset
    ]
    assert len(matches) == 1
    return matches[0]


def test_toy_model_is_accurate(toy_model, toy_data) -> None:
    """
    The shared classifier reaches 95% accuracy on held-out ID data.

    Returns:
        None: Verifies the precondition of the detection tests
    """
    assert accuracy(toy_model.spec, toy_model.params, toy_data.id_test) >= 0.95


def test_raw_input_knn_separates_far_ood(toy_data) -> None:
    """
    A brute-force KNN on raw inputs already separates the far set.

    Returns:
        None: Verifies the benchmark itself is separable
    """
    train = toy_data.train.inputs

    def kth_distance(x: np.ndarray) -> np.ndarray:
        d = np.linalg.norm(x[:, None, :] - train[None, :, :], axis=2)
        return -np.sort(d, axis=1)[:, 9]

    id_scores = kth_distance(toy_data.id_test.inputs)
    far_scores = kth_distance(toy_data.ood_sets[FAR_OOD].inputs)
    assert np.mean(far_scores[:, None] < id_scores[None, :]) > 0.99


def test_gradient_knn_detects_far_ood(toy_model, toy_data) -> None:
    """
    Gradient KNN with K=16 separates the far set and the ensemble keeps up.

    Returns:
        None: Verifies AUROC, FPR95 and the ensemble margin
    """
    config = RunConfig.model_validate(
        {
            "subspace": {"k": 16, "iters": 30, "seed": 0},
            "detector": {"kind": "knn", "knn_k": 10, "alpha": 1.0},
        }
    )
    result = run_pipeline(toy_model, toy_data, config)
    far = _row(result, "gradient", FAR_OOD)
    assert far.auroc >= 0.90
    assert far.fpr95 <= 0.30
    ensemble = _row(result, "ensemble", FAR_OOD)
    forward = _row(result, "forward", FAR_OOD)
    assert ensemble.auroc >= max(far.auroc, forward.auroc) - 0.02
    assert {r.dataset for r in result.report.rows} == {NEAR_OOD, FAR_OOD}
    assert len(result.report.macro) == 3


def test_zero_alpha_ensemble_equals_forward(
    toy_model, toy_data, small_run_config
) -> None:
    """
    With alpha 0 the ensemble metrics are the forward-only metrics.

    Returns:
        None: Verifies the ensemble combination at its boundary
    """
    config = small_run_config.with_overrides({"detector": {"alpha": 0.0}})
    result = run_pipeline(toy_model, toy_data, config)
    for dataset in (NEAR_OOD, FAR_OOD):
        ensemble = _row(result, "ensemble", dataset)
        forward = _row(result, "forward", dataset)
        assert ensemble.auroc == forward.auroc
        assert ensemble.fpr95 == forward.fpr95


def test_pipeline_is_deterministic(toy_model, toy_data, small_run_config) -> None:
    """
    Two runs give byte-identical reports; more threads give the same metrics.

    Returns:
        None: Verifies reproducibility across reruns and thread counts
    """
    first = render_report_json(
        run_pipeline(toy_model, toy_data, small_run_config).report
    )
    second = render_report_json(
        run_pipeline(toy_model, toy_data, small_run_config).report
    )
    assert first == second

    threaded = small_run_config.with_overrides({"runtime": {"threads": 4}})
    again = run_pipeline(toy_model, toy_data, threaded).report
    other = run_pipeline(toy_model, toy_data, threaded).report
    assert render_report_json(again) == render_report_json(other)
    base = run_pipeline(toy_model, toy_data, small_run_config).report
    for mine, theirs in zip(base.rows, again.rows, strict=True):
        assert mine.dataset == theirs.dataset and mine.source == theirs.source
        assert mine.auroc == pytest.approx(theirs.auroc, abs=1e-3)
        assert mine.fpr95 == pytest.approx(theirs.fpr95, abs=1e-2)


def test_gradient_spectrum_is_low_dimensional(toy_model, toy_data) -> None:
    """
    Sixteen components explain more than four, with a decaying spectrum.

    Returns:
        None: Verifies cumulative ratios, ordering and head-vs-tail shares
    """
    config = RunConfig.model_validate({"subspace": {"k": 16, "iters": 40, "seed": 0}})
    view = spectrum(fit_subspace(toy_model, toy_data.train, config))
    num_classes = toy_model.spec.num_classes
    assert view.cumulative_ratio[4 * num_classes - 1] > view.cumulative_ratio[
        num_classes - 1
    ]
    assert np.all(np.diff(view.eigenvalues) <= 0.0)
    assert view.cumulative_ratio[-1] <= 1.0 + 1e-8
    head = view.explained_ratio[:num_classes].sum()
    for start in range(1, view.explained_ratio.size - num_classes + 1):
        assert head >= view.explained_ratio[start : start + num_classes].sum()
    tail = view.explained_ratio[-num_classes:].sum()
    assert head > tail


def test_within_class_cosine_exceeds_cross_class(
    toy_model, toy_data, small_run_config
) -> None:
    """
    Train gradients align with their own class mean more than with others.

    Returns:
        None: Verifies the cosine diagnostic of the report
    """
    analysis = run_pipeline(toy_model, toy_data, small_run_config).report.analysis
    assert analysis.cosine_train is not None and analysis.cosine_test is not None
    assert analysis.cosine_train.within_class > analysis.cosine_train.cross_class
    assert (
        analysis.cosine_train.within_class - analysis.cosine_train.cross_class >= 0.05
    )
    assert analysis.cosine_test.within_class > analysis.cosine_test.cross_class
    assert analysis.classifier_train_accuracy >= 0.95
    assert analysis.spectrum is not None and len(analysis.spectrum.eigenvalues) == 8


def test_class_mean_subspace_pipeline(toy_model, toy_data, small_run_config) -> None:
    """
    A class-mean subspace runs end to end without a spectrum.

    Returns:
        None: Verifies K=C and the missing spectrum section
    """
    config = small_run_config.with_overrides(
        {"subspace": {"kind": "class_mean"}, "evaluation": {"ensemble": False}}
    )
    result = run_pipeline(toy_model, toy_data, config)
    assert result.subspace.k == toy_model.spec.num_classes
    assert result.report.analysis.spectrum is None
    assert {r.source for r in result.report.rows} == {"gradient"}


@pytest.mark.parametrize("kind", ["msp", "energy", "react", "bats", "maha"])
def test_every_detector_kind_runs(
    toy_model, toy_data, small_run_config, kind: str
) -> None:
    """
    Every detector kind produces a complete report.

    Args:
        kind: Detector kind

    Returns:
        None: Verifies rows and a finite threshold
    """
    config = small_run_config.with_overrides(
        {
            "detector": {"kind": kind, "tail_dims": 4, "head": {"epochs": 2}},
            "evaluation": {"ensemble": False},
        }
    )
    report = run_pipeline(toy_model, toy_data, config).report
    assert len(report.rows) == 2
    assert np.isfinite(report.lambda_at_95tpr)
    assert report.metadata["threshold_convention"]


def test_keep_intermediates(toy_model, toy_data, small_run_config, tmp_path) -> None:
    """
    Intermediate artifacts are written and the saved subspace reloads.

    Returns:
        None: Verifies file names and the subspace basis
    """
    config = small_run_config.with_overrides(
        {"evaluation": {"keep_intermediates": True}}
    )
    result = run_pipeline(toy_model, toy_data, config, workdir=tmp_path)
    names = {p.name for p in tmp_path.iterdir()}
    for expected in (
        "subspace.gss",
        "detector_gradient.gsdet",
        "detector_forward.gsdet",
        "embed_gradient_train.gsd",
        f"scores_ensemble_{FAR_OOD}.gsd",
    ):
        assert expected in names
    reloaded = load_subspace(tmp_path / "subspace.gss")
    np.testing.assert_allclose(reloaded.basis, result.subspace.basis, atol=1e-6)
    with pytest.raises(UsageError):
        run_pipeline(toy_model, toy_data, config)


def test_precomputed_subspace_is_reused(
    toy_model, toy_data, small_run_config
) -> None:
    """
    Passing the fitted subspace reproduces the metrics of a fresh fit.

    Returns:
        None: Verifies the reuse path
    """
    fitted = fit_subspace(toy_model, toy_data.train, small_run_config)
    reused = run_pipeline(toy_model, toy_data, small_run_config, subspace=fitted)
    fresh = run_pipeline(toy_model, toy_data, small_run_config)
    assert render_report_json(reused.report) == render_report_json(fresh.report)


def test_sweep_over_knn_k(toy_model, toy_data, small_run_config) -> None:
    """
    A sweep yields per-dataset and macro rows for every value.

    Returns:
        None: Verifies the row layout
    """
    config = small_run_config.with_overrides(
        {
            "sweep": {"parameter": "knn_k", "values": [1, 5]},
            "evaluation": {"ensemble": False},
        }
    )
    rows = run_sweep(toy_model, toy_data, config)
    assert [row.value for row in rows] == [1.0] * 3 + [5.0] * 3
    assert {row.dataset for row in rows} == {NEAR_OOD, FAR_OOD, "macro_avg"}
    assert all(row.parameter == "knn_k" for row in rows)
    assert rows[0].as_tuple()[0] == "knn_k"


def test_sweep_rejects_fractional_integer_parameter(
    toy_model, toy_data, small_run_config
) -> None:
    """
    Fractional values for an integer parameter fail before any work.

    Returns:
        None: Verifies the usage error
    """
    config = small_run_config.with_overrides(
        {"sweep": {"parameter": "k", "values": [2.5]}}
    )
    with pytest.raises(UsageError, match="integer"):
        run_sweep(toy_model, toy_data, config)


def test_result_scores_cover_every_stream(
    toy_model, toy_data, small_run_config
) -> None:
    """
    Score streams exist for the ID test set and each OOD set.

    Returns:
        None: Verifies stream names and lengths
    """
    result = run_pipeline(toy_model, toy_data, small_run_config)
    gradient = result.scores["gradient"]
    assert set(gradient) == {"id", NEAR_OOD, FAR_OOD}
    assert gradient["id"].shape == (len(toy_data.id_test),)


def test_forward_msp_uses_classifier_logits(
    toy_model, toy_data, small_run_config
) -> None:
    """
    Forward MSP scores are the trained classifier's own max softmax.

    Returns:
        None: Verifies every forward score stream and the forward report rows
    """
    config = small_run_config.with_overrides(
        {"detector": {"kind": "msp", "tail_dims": 3, "head": {"epochs": 2}}}
    )
    result = run_pipeline(toy_model, toy_data, config)
    streams = {"id": toy_data.id_test, **toy_data.ood_sets}
    for name, batch in streams.items():
        logits = forward(toy_model.spec, toy_model.params, batch)
        np.testing.assert_allclose(
            result.scores["forward"][name],
            softmax(logits, axis=1).max(axis=1),
            rtol=1e-12,
            atol=1e-12,
        )
    assert not result.detectors["forward"].head.normalize
    assert result.detectors["gradient"].head.normalize
    assert {NEAR_OOD, FAR_OOD} <= {
        r.dataset for r in result.report.rows if r.source == "forward"
    }


def test_report_has_head_and_tail_dim_histograms(
    toy_model, toy_data, small_run_config
) -> None:
    """
    The report carries per-dimension histograms for the first and last d dims.

    Returns:
        None: Verifies dims 0..2 and K-3..K-1 are present for every stream
    """
    config = small_run_config.with_overrides(
        {"detector": {"tail_dims": 3}, "evaluation": {"ensemble": False}}
    )
    result = run_pipeline(toy_model, toy_data, config)
    k = result.subspace.k
    names = {h.stream for h in result.report.histograms}
    for dim in (0, 1, 2, k - 3, k - 2, k - 1):
        for stream in ("id", NEAR_OOD, FAR_OOD):
            assert f"embedding_dim{dim}/{stream}" in names
    assert "embedding_dim3/id" not in names
    last = f"embedding_dim{k - 1}/id"
    counts = [h.counts for h in result.report.histograms if h.stream == last]
    assert sum(counts[0]) == len(toy_data.id_test)
