"""
Synthetic benchmarks, OOD metrics, reports and the end-to-end pipeline.
"""

from grad_subspace_ood.evaluation.analysis import (
    CosineReport,
    class_cosine_report,
    class_means,
)
from grad_subspace_ood.evaluation.metrics import (
    Histogram,
    auroc,
    calibrate_lambda,
    fpr95,
    fpr_at_threshold,
    histogram,
)
from grad_subspace_ood.evaluation.pipeline import (
    PipelineResult,
    SweepRow,
    fit_subspace,
    run_pipeline,
    run_sweep,
    sweep_config,
)
from grad_subspace_ood.evaluation.reporting import (
    render_report_csv,
    render_report_json,
    render_spectrum_csv,
    render_sweep_csv,
    write_report,
)
from grad_subspace_ood.evaluation.schemas import EvalReport, MetricRow, macro_rows
from grad_subspace_ood.evaluation.synth import (
    SynthData,
    default_synth_config,
    generate_synth,
    load_synth,
    resolve_synth_config,
    save_synth,
)

__all__ = [
    "CosineReport",
    "EvalReport",
    "Histogram",
    "MetricRow",
    "PipelineResult",
    "SweepRow",
    "SynthData",
    "auroc",
    "calibrate_lambda",
    "class_cosine_report",
    "class_means",
    "default_synth_config",
    "fit_subspace",
    "fpr95",
    "fpr_at_threshold",
    "generate_synth",
    "histogram",
    "load_synth",
    "macro_rows",
    "render_report_csv",
    "render_report_json",
    "render_spectrum_csv",
    "render_sweep_csv",
    "resolve_synth_config",
    "run_pipeline",
    "run_sweep",
    "save_synth",
    "sweep_config",
    "write_report",
]
