"""
End-to-end evaluation: embed, project, fit detectors, score, measure.

Each stage runs inside ``log_stage`` so failures carry the stage name and
``--json-logs`` emits one record per stage.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import cast

import numpy as np

from grad_subspace_ood.config import TOOL_VERSION
from grad_subspace_ood.config.config import (
    DetectorKind,
    RunConfig,
    SubspaceKind,
    SweepParameter,
)
from grad_subspace_ood.detectors.artifact import save_detector
from grad_subspace_ood.detectors.base import FittedDetector, fit_detector
from grad_subspace_ood.detectors.head import model_output_head
from grad_subspace_ood.detectors.scores import ensemble_scores
from grad_subspace_ood.evaluation.analysis import class_cosine_report, class_means
from grad_subspace_ood.evaluation.metrics import (
    TIE_CONVENTION,
    auroc,
    calibrate_lambda,
    fpr_at_threshold,
    histogram,
)
from grad_subspace_ood.evaluation.schemas import (
    Analysis,
    EvalReport,
    HistogramData,
    MetricRow,
    Source,
    SpectrumSummary,
    ThresholdRow,
    macro_rows,
)
from grad_subspace_ood.evaluation.synth import SynthData
from grad_subspace_ood.gradembed.normalization import (
    embed_raw_batch,
    fit_norm_stats,
    normalize_batch,
)
from grad_subspace_ood.micronet.artifact import ModelArtifact
from grad_subspace_ood.micronet.autodiff import penultimate_features
from grad_subspace_ood.micronet.model import FloatArray, SampleBatch
from grad_subspace_ood.micronet.training import accuracy
from grad_subspace_ood.storage.datasets import save_matrix
from grad_subspace_ood.subspace.artifact import save_subspace
from grad_subspace_ood.subspace.basis import (
    Subspace,
    embed_projected,
    extract_classmean_subspace_streaming,
    extract_pca_subspace,
    spectrum,
)
from grad_subspace_ood.utils.errors import ConfigurationError, UsageError
from grad_subspace_ood.utils.logger import logger
from grad_subspace_ood.utils.metrics import log_stage

TRAIN = "train"
ID_TEST = "id"


@dataclass(frozen=True)
class PipelineResult:
    """The report plus the fitted state it was computed from."""

    report: EvalReport
    subspace: Subspace
    detectors: dict[str, FittedDetector]
    scores: dict[str, dict[str, FloatArray]] = field(default_factory=dict)


def fit_subspace(
    model: ModelArtifact,
    train: SampleBatch,
    config: RunConfig,
) -> Subspace:
    """Fit norm stats and the configured subspace kind on ``train``."""
    sub_config, runtime = config.subspace, config.runtime
    stats = fit_norm_stats(
        model.spec,
        model.params,
        train,
        sub_config.epsilon,
        runtime.chunk_size,
        runtime.threads,
    )
    if sub_config.kind == SubspaceKind.PCA:
        return extract_pca_subspace(
            model.spec,
            model.params,
            train,
            sub_config.k,
            sub_config,
            stats,
            runtime.chunk_size,
            runtime.threads,
        )
    return extract_classmean_subspace_streaming(
        model.spec,
        model.params,
        train,
        stats,
        sub_config.orthonormalize,
        runtime.chunk_size,
        runtime.threads,
    )


def _streams(data: SynthData) -> dict[str, SampleBatch]:
    return {TRAIN: data.train, ID_TEST: data.id_test, **data.ood_sets}


def _labels(batch: SampleBatch) -> np.ndarray:
    if batch.labels is None:
        raise UsageError("training and ID test data need labels")
    return batch.labels


def _histogram_data(stream: str, values: FloatArray, bins: int) -> HistogramData:
    hist = histogram(values, bins)
    return HistogramData(
        stream=stream,
        edges=[float(e) for e in hist.edges],
        counts=[int(c) for c in hist.counts],
    )


def histogram_dims(k: int, tail_dims: int) -> list[int]:
    """Leading and trailing embedding dimensions that get a histogram."""
    d = min(tail_dims, k)
    return sorted({*range(d), *range(k - d, k)})


def _keep(
    workdir: Path,
    config: RunConfig,
    sub: Subspace,
    embeddings: dict[str, dict[str, FloatArray]],
    detectors: dict[str, FittedDetector],
    scores: dict[str, dict[str, FloatArray]],
    streams: dict[str, SampleBatch],
) -> None:
    echo = config.echo()
    save_subspace(sub, workdir / "subspace.gss", echo)
    for source, per_stream in embeddings.items():
        for name, values in per_stream.items():
            save_matrix(
                values,
                workdir / f"embed_{source}_{name}.gsd",
                streams[name].labels,
                {"source": source, "stream": name, "run_config": echo},
            )
    for source, detector in detectors.items():
        save_detector(detector, workdir / f"detector_{source}.gsdet", echo)
    for source, per_stream in scores.items():
        for name, values in per_stream.items():
            save_matrix(
                values,
                workdir / f"scores_{source}_{name}.gsd",
                metadata={"source": source, "stream": name, "run_config": echo},
            )


def run_pipeline(
    model: ModelArtifact,
    data: SynthData,
    config: RunConfig,
    subspace: Subspace | None = None,
    workdir: str | Path | None = None,
) -> PipelineResult:
    """
    Evaluate one detector configuration end to end.

    The detector is always fitted on gradient embeddings. With
    ``config.evaluation.ensemble`` the same detector kind is also fitted on
    penultimate features and the two scores are combined as
    ``forward + alpha · gradient``. On penultimate features the head kinds
    score through the classifier's own output layer, so forward msp and
    energy are the classifier's baselines.

    Embedding histograms cover the leading and the last ``tail_dims``
    dimensions of the gradient embedding, one per dimension and stream.

    Args:
        model: Trained classifier
        data: Train, ID test and OOD sets
        config: Resolved run configuration
        subspace: Precomputed subspace; fitted from ``data.train`` when omitted
        workdir: Directory for intermediates when ``keep_intermediates`` is set

    Returns:
        PipelineResult: Report, subspace, fitted detectors and score streams

    Raises:
        StageError: Any failure, prefixed with the failing stage
    """
    spec, params = model.spec, model.params
    det_config, eval_config = config.detector, config.evaluation
    chunk, threads = config.runtime.chunk_size, config.runtime.threads
    kind = det_config.kind.value
    streams = _streams(data)
    ood_names = list(data.ood_sets)
    if {TRAIN, ID_TEST} & set(ood_names):
        raise UsageError(f"OOD sets cannot be named {TRAIN!r} or {ID_TEST!r}")

    with log_stage("fit_subspace", kind=config.subspace.kind.value):
        if subspace is None:
            subspace = fit_subspace(model, data.train, config)
        elif subspace.num_params != spec.num_params:
            raise ConfigurationError(
                f"subspace covers {subspace.num_params} params, "
                f"model has {spec.num_params}"
            )
    sub = subspace

    with log_stage("embed", k=sub.k):
        embeddings: dict[str, dict[str, FloatArray]] = {
            "gradient": {
                name: embed_projected(spec, params, batch, sub, chunk, threads)
                for name, batch in streams.items()
            }
        }
        if eval_config.ensemble:
            embeddings["forward"] = {
                name: penultimate_features(spec, params, batch)
                for name, batch in streams.items()
            }

    train_labels, test_labels = _labels(data.train), _labels(data.id_test)
    detectors: dict[str, FittedDetector] = {}
    with log_stage("fit_detector", detector=kind):
        for source, per_stream in embeddings.items():
            detectors[source] = fit_detector(
                det_config,
                per_stream[TRAIN],
                train_labels,
                spec.num_classes,
                heldout=(per_stream[ID_TEST], test_labels),
                head=model_output_head(spec, params) if source == "forward" else None,
            )

    scores: dict[str, dict[str, FloatArray]] = {}
    with log_stage("score", detector=kind):
        for source, detector in detectors.items():
            scores[source] = {
                name: detector.score(embeddings[source][name], chunk, threads)
                for name in [ID_TEST, *ood_names]
            }
        if eval_config.ensemble:
            scores["ensemble"] = {
                name: ensemble_scores(
                    scores["forward"][name], scores["gradient"][name], det_config.alpha
                )
                for name in [ID_TEST, *ood_names]
            }

    rows: list[MetricRow] = []
    thresholds: list[ThresholdRow] = []
    histograms: list[HistogramData] = []
    with log_stage("metrics", detector=kind):
        for source_name, per_stream in scores.items():
            source = cast(Source, source_name)
            lam = calibrate_lambda(per_stream[ID_TEST], eval_config.tpr_target)
            thresholds.append(ThresholdRow(detector=kind, source=source, threshold=lam))
            for name in ood_names:
                rows.append(
                    MetricRow(
                        dataset=name,
                        detector=kind,
                        source=source,
                        fpr95=fpr_at_threshold(per_stream[name], lam),
                        auroc=auroc(per_stream[ID_TEST], per_stream[name]),
                    )
                )
            for name, values in per_stream.items():
                histograms.append(
                    _histogram_data(
                        f"{source}/{kind}/{name}", values, eval_config.histogram_bins
                    )
                )
        for dim in histogram_dims(sub.k, det_config.tail_dims):
            for name in [ID_TEST, *ood_names]:
                histograms.append(
                    _histogram_data(
                        f"embedding_dim{dim}/{name}",
                        embeddings["gradient"][name][:, dim],
                        eval_config.histogram_bins,
                    )
                )

    with log_stage("analysis"):
        analysis = _analysis(model, data, sub, detectors["gradient"])

    if eval_config.keep_intermediates:
        if workdir is None:
            raise UsageError("keep_intermediates needs a working directory")
        with log_stage("keep_intermediates"):
            _keep(Path(workdir), config, sub, embeddings, detectors, scores, streams)

    report = EvalReport(
        tool_version=TOOL_VERSION,
        rows=rows,
        macro=macro_rows(rows),
        thresholds=thresholds,
        lambda_at_95tpr=thresholds[0].threshold,
        tpr_target=eval_config.tpr_target,
        histograms=histograms,
        analysis=analysis,
        config=config.echo(),
        metadata={
            "threshold_convention": TIE_CONVENTION,
            "model_seed": model.seed,
            "subspace_kind": sub.kind.value,
            "k": sub.k,
            "ood_sets": ood_names,
        },
    )
    logger.info(
        f"Evaluated {kind} on {len(ood_names)} OOD sets: "
        + ", ".join(
            f"{r.source}/{r.dataset} AUROC {r.auroc:.4f} FPR95 {r.fpr95:.4f}"
            for r in rows
        )
    )
    return PipelineResult(report, sub, detectors, scores)


def _analysis(
    model: ModelArtifact,
    data: SynthData,
    sub: Subspace,
    detector: FittedDetector,
) -> Analysis:
    spec, params = model.spec, model.params
    train_grads = normalize_batch(
        embed_raw_batch(spec, params, data.train), sub.norm_stats
    )
    test_grads = normalize_batch(
        embed_raw_batch(spec, params, data.id_test), sub.norm_stats
    )
    train_labels, test_labels = _labels(data.train), _labels(data.id_test)
    means = class_means(train_grads, train_labels, spec.num_classes)
    spectrum_summary = None
    if sub.kind == SubspaceKind.PCA:
        spec_view = spectrum(sub)
        spectrum_summary = SpectrumSummary(
            eigenvalues=spec_view.eigenvalues.tolist(),
            explained_ratio=spec_view.explained_ratio.tolist(),
            cumulative_ratio=spec_view.cumulative_ratio.tolist(),
            total_variance=spec_view.total_variance,
        )
    return Analysis(
        cosine_train=class_cosine_report(train_grads, train_labels, means),
        cosine_test=class_cosine_report(test_grads, test_labels, means),
        spectrum=spectrum_summary,
        classifier_train_accuracy=accuracy(spec, params, data.train),
        head_train_accuracy=detector.train_accuracy,
        head_heldout_accuracy=detector.heldout_accuracy,
        subspace_converged=sub.converged if sub.kind == SubspaceKind.PCA else None,
        subspace_iterations=sub.iterations if sub.kind == SubspaceKind.PCA else None,
    )


@dataclass(frozen=True)
class SweepRow:
    """One metric row of a sensitivity sweep."""

    parameter: str
    value: float
    dataset: str
    detector: str
    source: str
    fpr95: float
    auroc: float

    def as_tuple(self) -> tuple[str, float, str, str, str, float, float]:
        return (
            self.parameter,
            self.value,
            self.dataset,
            self.detector,
            self.source,
            self.fpr95,
            self.auroc,
        )


_SWEEP_TARGETS: dict[SweepParameter, tuple[str, str, type]] = {
    SweepParameter.K: ("subspace", "k", int),
    SweepParameter.TEMPERATURE: ("detector", "temperature", float),
    SweepParameter.REACT_PERCENTILE: ("detector", "react_percentile", float),
    SweepParameter.BATS_LAMBDA: ("detector", "bats_lambda", float),
    SweepParameter.KNN_K: ("detector", "knn_k", int),
}

# Parameters that only matter for one detector kind
_INERT_UNLESS = {
    SweepParameter.REACT_PERCENTILE: DetectorKind.REACT,
    SweepParameter.BATS_LAMBDA: DetectorKind.BATS,
}


def sweep_config(
    config: RunConfig, parameter: SweepParameter, value: float
) -> RunConfig:
    """``config`` with the swept parameter set to ``value``."""
    section, key, convert = _SWEEP_TARGETS[parameter]
    if convert is int and float(value) != int(value):
        raise UsageError(f"{parameter.value} needs integer values, got {value}")
    return config.with_overrides({section: {key: convert(value)}})


def run_sweep(
    model: ModelArtifact,
    data: SynthData,
    config: RunConfig,
) -> list[SweepRow]:
    """
    Re-run the pipeline for every value of ``config.sweep``.

    The subspace is fitted once unless K itself is swept. Intermediates
    are never kept.
    """
    parameter = config.sweep.parameter
    base = config.with_overrides({"evaluation": {"keep_intermediates": False}})
    shared = None
    if parameter != SweepParameter.K:
        with log_stage("fit_subspace", kind=base.subspace.kind.value):
            shared = fit_subspace(model, data.train, base)
    inert = _INERT_UNLESS.get(parameter)
    if inert is not None and base.detector.kind != inert:
        logger.warning(
            f"Sweeping {parameter.value} has no effect on a {base.detector.kind.value} "
            "detector"
        )

    rows: list[SweepRow] = []
    for value in config.sweep.values:
        run_config = sweep_config(base, parameter, value)
        logger.info(f"Sweep {parameter.value}={value}")
        result = run_pipeline(model, data, run_config, subspace=shared)
        for row in [*result.report.rows, *result.report.macro]:
            rows.append(
                SweepRow(
                    parameter=parameter.value,
                    value=float(value),
                    dataset=row.dataset,
                    detector=row.detector,
                    source=row.source,
                    fpr95=row.fpr95,
                    auroc=row.auroc,
                )
            )
    return rows
