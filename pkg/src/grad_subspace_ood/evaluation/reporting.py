"""
Report writers: JSON document, flat metric CSV, histogram, spectrum and sweep CSVs.

Every writer goes through an atomic temp-file rename.
"""

import csv
import io
import re
from collections.abc import Iterable, Sequence
from pathlib import Path
from typing import Any

from grad_subspace_ood.evaluation.schemas import EvalReport, HistogramData
from grad_subspace_ood.storage.container import atomic_write_text, canonical_json
from grad_subspace_ood.subspace.basis import Spectrum

METRIC_COLUMNS = ("dataset", "detector", "source", "fpr95", "auroc")
SWEEP_COLUMNS = ("parameter", "value", *METRIC_COLUMNS)


def _csv_text(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buffer.getvalue()


def render_report_json(report: EvalReport) -> str:
    return canonical_json(report.model_dump(mode="json"))


def render_report_csv(report: EvalReport) -> str:
    rows = [*report.rows, *report.macro]
    return _csv_text(
        METRIC_COLUMNS,
        ((r.dataset, r.detector, r.source, r.fpr95, r.auroc) for r in rows),
    )


def render_histogram_csv(data: HistogramData) -> str:
    return _csv_text(
        ("bin_left", "bin_right", "count"),
        (
            (data.edges[i], data.edges[i + 1], data.counts[i])
            for i in range(len(data.counts))
        ),
    )


def render_spectrum_csv(spec: Spectrum) -> str:
    return _csv_text(
        ("index", "eigenvalue", "ratio", "cumulative"),
        (
            (
                j,
                float(spec.eigenvalues[j]),
                float(spec.explained_ratio[j]),
                float(spec.cumulative_ratio[j]),
            )
            for j in range(spec.eigenvalues.size)
        ),
    )


def render_sweep_csv(rows: Iterable[Sequence[Any]]) -> str:
    return _csv_text(SWEEP_COLUMNS, rows)


def histogram_filename(stream: str) -> str:
    """File-system safe name of a histogram stream."""
    return "hist_" + re.sub(r"[^A-Za-z0-9_.-]+", "_", stream) + ".csv"


def write_report(report: EvalReport, out_dir: str | Path) -> list[Path]:
    """
    Write ``report.json``, ``report.csv`` and one CSV per histogram.

    Returns:
        list[Path]: Written files in write order
    """
    target = Path(out_dir)
    written = [target / "report.json", target / "report.csv"]
    atomic_write_text(written[0], render_report_json(report))
    atomic_write_text(written[1], render_report_csv(report))
    for data in report.histograms:
        path = target / histogram_filename(data.stream)
        atomic_write_text(path, render_histogram_csv(data))
        written.append(path)
    return written
