"""
Pydantic models for evaluation reports.

Reports are serialized with sorted keys and repr floats so the same run
always produces the same bytes.
"""

from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

from grad_subspace_ood.evaluation.analysis import CosineReport

Source = Literal["gradient", "forward", "ensemble"]

MACRO_DATASET = "macro_avg"


class MetricRow(BaseModel):
    """FPR95 and AUROC of one detector on one OOD set."""

    model_config = ConfigDict(frozen=True)

    dataset: str = Field(..., description="OOD set name or macro_avg")
    detector: str = Field(..., description="Detector kind")
    source: Source = Field(..., description="Embedding the scores came from")
    fpr95: float = Field(..., ge=0.0, le=1.0)
    auroc: float = Field(..., ge=0.0, le=1.0)


class ThresholdRow(BaseModel):
    """Calibrated λ of one score stream."""

    model_config = ConfigDict(frozen=True)

    detector: str
    source: Source
    threshold: float


class HistogramData(BaseModel):
    """Bin edges and counts of one value stream."""

    model_config = ConfigDict(frozen=True)

    stream: str = Field(..., description="e.g. gradient/knn/id or embedding_dim0/far")
    edges: list[float]
    counts: list[int]

    @model_validator(mode="after")
    def validate_bins(self) -> "HistogramData":
        """Edges bound every bin."""
        if len(self.edges) != len(self.counts) + 1:
            raise ValueError("histogram needs one more edge than counts")
        return self


class SpectrumSummary(BaseModel):
    """Explained-variance summary of a PCA subspace."""

    model_config = ConfigDict(frozen=True)

    eigenvalues: list[float]
    explained_ratio: list[float]
    cumulative_ratio: list[float]
    total_variance: float


class Analysis(BaseModel):
    """Gradient structure diagnostics of a run."""

    model_config = ConfigDict(frozen=True)

    cosine_train: CosineReport | None = None
    cosine_test: CosineReport | None = None
    spectrum: SpectrumSummary | None = None
    classifier_train_accuracy: float | None = None
    head_train_accuracy: float | None = None
    head_heldout_accuracy: float | None = None
    subspace_converged: bool | None = None
    subspace_iterations: int | None = None


class EvalReport(BaseModel):
    """
    Everything one evaluation run produces.

    ``macro`` holds one row per (detector, source), averaging ``rows``.
    """

    model_config = ConfigDict(frozen=True)

    tool_version: str
    rows: list[MetricRow] = Field(default_factory=list)
    macro: list[MetricRow] = Field(default_factory=list)
    thresholds: list[ThresholdRow] = Field(default_factory=list)
    lambda_at_95tpr: float = Field(..., description="λ of the primary gradient score")
    tpr_target: float = Field(default=0.95, gt=0.0, lt=1.0)
    histograms: list[HistogramData] = Field(default_factory=list)
    analysis: Analysis = Field(default_factory=Analysis)
    config: dict[str, Any] = Field(default_factory=dict)
    metadata: dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode="after")
    def validate_macro(self) -> "EvalReport":
        """Macro rows must equal the means of their per-dataset rows."""
        for macro in self.macro:
            members = [
                row
                for row in self.rows
                if row.detector == macro.detector and row.source == macro.source
            ]
            if not members:
                raise ValueError(
                    f"macro row {macro.detector}/{macro.source} has no rows"
                )
            for metric in ("fpr95", "auroc"):
                mean = sum(getattr(row, metric) for row in members) / len(members)
                if abs(mean - getattr(macro, metric)) > 1e-12:
                    raise ValueError(
                        f"macro {metric} of {macro.detector}/{macro.source} "
                        "is not the mean"
                    )
        return self


def macro_rows(rows: list[MetricRow]) -> list[MetricRow]:
    """Average ``rows`` per (detector, source), keeping first-seen order."""
    groups: dict[tuple[str, str], list[MetricRow]] = {}
    for row in rows:
        groups.setdefault((row.detector, row.source), []).append(row)
    return [
        MetricRow(
            dataset=MACRO_DATASET,
            detector=detector,
            source=members[0].source,
            fpr95=sum(r.fpr95 for r in members) / len(members),
            auroc=sum(r.auroc for r in members) / len(members),
        )
        for (detector, _), members in groups.items()
    ]
