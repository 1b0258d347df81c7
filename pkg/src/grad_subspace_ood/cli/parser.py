"""
Argument parsing for the ``gso`` command.

Flags that override the run configuration use a dotted ``dest`` naming their
place in ``RunConfig`` (``subspace.k``, ``detector.head.lr``); ``overrides_from``
folds every such flag that was given into a nested override dict. Flags left
unset stay ``None`` so the config file and defaults show through.
"""

import argparse
from collections.abc import Callable
from pathlib import Path
from typing import Any

from grad_subspace_ood.config import TOOL_VERSION
from grad_subspace_ood.config.config import (
    CovarianceMode,
    DetectorKind,
    LogLevel,
    SubspaceKind,
    SweepParameter,
)
from grad_subspace_ood.utils.errors import UsageError

FEATURES = ("gradient", "forward")


class GsoArgumentParser(argparse.ArgumentParser):
    """ArgumentParser that raises UsageError instead of exiting with code 2."""

    def error(self, message: str) -> Any:
        raise UsageError(f"{self.prog}: {message}")


def _list_of(convert: Callable[[str], Any]) -> Callable[[str], list[Any]]:
    def parse(text: str) -> list[Any]:
        try:
            return [convert(part) for part in text.split(",") if part.strip()]
        except ValueError as e:
            raise argparse.ArgumentTypeError(f"invalid list {text!r}: {e}") from e

    return parse


def _choices(enum_type: type) -> list[str]:
    return [member.value for member in enum_type]


def _add_common(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("common options")
    group.add_argument("--config", type=Path, help="JSON run configuration file")
    group.add_argument("--threads", dest="runtime.threads", type=int)
    group.add_argument(
        "--chunk-size",
        dest="runtime.chunk_size",
        type=int,
        help="Rows per reduction chunk",
    )
    group.add_argument(
        "--json-logs",
        action="store_true",
        default=None,
        help="Emit one JSON record per log line",
    )
    group.add_argument("--log-level", choices=_choices(LogLevel))


def _add_subspace_flags(parser: argparse.ArgumentParser, seed_flag: str) -> None:
    group = parser.add_argument_group("subspace")
    group.add_argument(
        "--subspace-kind", dest="subspace.kind", choices=_choices(SubspaceKind)
    )
    group.add_argument("--k", dest="subspace.k", type=int, help="Reduced dimension")
    group.add_argument(
        "--iters", dest="subspace.iters", type=int, help="Maximum power iterations"
    )
    group.add_argument("--tol", dest="subspace.tol", type=float)
    group.add_argument(seed_flag, dest="subspace.seed", type=int)
    group.add_argument("--epsilon", dest="subspace.epsilon", type=float)
    group.add_argument(
        "--orthonormalize",
        dest="subspace.orthonormalize",
        action=argparse.BooleanOptionalAction,
        default=None,
    )


def _add_detector_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("detector")
    group.add_argument(
        "--detector", dest="detector.kind", choices=_choices(DetectorKind)
    )
    group.add_argument("--temperature", dest="detector.temperature", type=float)
    group.add_argument(
        "--tail-dims", dest="detector.tail_dims", type=int, help="Clipped tail dims"
    )
    group.add_argument(
        "--react-percentile", dest="detector.react_percentile", type=float
    )
    group.add_argument("--bats-lambda", dest="detector.bats_lambda", type=float)
    group.add_argument("--knn-k", dest="detector.knn_k", type=int)
    group.add_argument(
        "--knn-normalize",
        dest="detector.knn_normalize",
        action=argparse.BooleanOptionalAction,
        default=None,
    )
    group.add_argument("--ridge-scale", dest="detector.ridge_scale", type=float)
    group.add_argument(
        "--covariance", dest="detector.covariance", choices=_choices(CovarianceMode)
    )
    group.add_argument(
        "--alpha", dest="detector.alpha", type=float, help="Ensemble weight"
    )
    group.add_argument("--head-lr", dest="detector.head.lr", type=float)
    group.add_argument("--head-momentum", dest="detector.head.momentum", type=float)
    group.add_argument("--head-epochs", dest="detector.head.epochs", type=int)
    group.add_argument("--head-batch-size", dest="detector.head.batch_size", type=int)
    group.add_argument("--head-seed", dest="detector.head.seed", type=int)


def _add_evaluation_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("evaluation")
    group.add_argument("--tpr-target", dest="evaluation.tpr_target", type=float)
    group.add_argument(
        "--histogram-bins", dest="evaluation.histogram_bins", type=int
    )
    group.add_argument(
        "--keep-intermediates",
        dest="evaluation.keep_intermediates",
        action=argparse.BooleanOptionalAction,
        default=None,
    )
    group.add_argument(
        "--ensemble",
        dest="evaluation.ensemble",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="Also score forward features and the forward+gradient ensemble",
    )


def build_parser() -> GsoArgumentParser:
    """Build the ``gso`` parser with one sub-command per pipeline step."""
    parser = GsoArgumentParser(
        prog="gso",
        description="Gradient-subspace out-of-distribution detection toolkit",
    )
    parser.add_argument("--version", action="version", version=TOOL_VERSION)
    commands = parser.add_subparsers(dest="command", required=True)

    synth = commands.add_parser("synth", help="Generate a synthetic benchmark")
    synth.add_argument("--out", type=Path, required=True, help="Output directory")
    synth.add_argument("--seed", dest="synth.seed", type=int)
    synth.add_argument("--dim", dest="synth.dim", type=int)
    synth.add_argument("--spread", dest="synth.spread", type=float)
    synth.add_argument("--test-fraction", dest="synth.test_fraction", type=float)
    _add_common(synth)

    train = commands.add_parser("train", help="Train the classifier")
    train.add_argument("--data", type=Path, required=True, help="Labelled dataset")
    train.add_argument("--out", type=Path, required=True, help="Model artifact")
    train.add_argument(
        "--num-classes", type=int, help="C; defaults to the largest label + 1"
    )
    train.add_argument("--hidden-dims", dest="train.hidden_dims", type=_list_of(int))
    train.add_argument(
        "--affine-norm",
        dest="train.affine_norm",
        action=argparse.BooleanOptionalAction,
        default=None,
    )
    train.add_argument("--lr", dest="train.lr", type=float)
    train.add_argument("--momentum", dest="train.momentum", type=float)
    train.add_argument("--epochs", dest="train.epochs", type=int)
    train.add_argument("--batch-size", dest="train.batch_size", type=int)
    train.add_argument("--seed", dest="train.seed", type=int)
    train.add_argument("--label-smoothing", dest="train.label_smoothing", type=float)
    _add_common(train)

    fit_subspace = commands.add_parser(
        "fit-subspace", help="Extract a pca or class-mean gradient subspace"
    )
    fit_subspace.add_argument("--model", type=Path, required=True)
    fit_subspace.add_argument(
        "--data", type=Path, required=True, help="Labelled training dataset"
    )
    fit_subspace.add_argument("--out", type=Path, required=True)
    _add_subspace_flags(fit_subspace, "--seed")
    _add_common(fit_subspace)

    embed = commands.add_parser("embed", help="Embed a dataset")
    embed.add_argument("--model", type=Path, required=True)
    embed.add_argument("--data", type=Path, required=True)
    embed.add_argument("--out", type=Path, required=True)
    embed.add_argument("--features", choices=FEATURES, default="gradient")
    embed.add_argument(
        "--subspace", type=Path, help="Subspace artifact (gradient features)"
    )
    _add_common(embed)

    fit_detector = commands.add_parser(
        "fit-detector", help="Fit a detector on training embeddings"
    )
    fit_detector.add_argument(
        "--embeddings", type=Path, required=True, help="Labelled train embeddings"
    )
    fit_detector.add_argument(
        "--heldout", type=Path, help="Labelled held-out embeddings"
    )
    fit_detector.add_argument("--out", type=Path, required=True)
    fit_detector.add_argument("--num-classes", type=int)
    fit_detector.add_argument(
        "--model",
        type=Path,
        help="Score head kinds through this model's output layer (forward features)",
    )
    _add_detector_flags(fit_detector)
    _add_common(fit_detector)

    score = commands.add_parser("score", help="Score embeddings with a detector")
    score.add_argument("--detector", type=Path, required=True)
    score.add_argument("--embeddings", type=Path, required=True)
    score.add_argument("--out", type=Path, required=True)
    _add_common(score)

    evaluate = commands.add_parser("eval", help="Run the full evaluation")
    evaluate.add_argument("--model", type=Path, required=True)
    evaluate.add_argument(
        "--data", type=Path, required=True, help="Benchmark directory"
    )
    evaluate.add_argument("--out", type=Path, required=True, help="Report directory")
    evaluate.add_argument(
        "--subspace", type=Path, help="Precomputed subspace; fitted when omitted"
    )
    _add_subspace_flags(evaluate, "--subspace-seed")
    _add_detector_flags(evaluate)
    _add_evaluation_flags(evaluate)
    _add_common(evaluate)

    spectrum = commands.add_parser(
        "spectrum", help="Explained-variance CSV of a pca subspace"
    )
    spectrum.add_argument("--subspace", type=Path, required=True)
    spectrum.add_argument("--out", type=Path, required=True)
    _add_common(spectrum)

    sweep = commands.add_parser("sweep", help="Sweep one hyper-parameter")
    sweep.add_argument("--model", type=Path, required=True)
    sweep.add_argument("--data", type=Path, required=True)
    sweep.add_argument("--out", type=Path, required=True, help="Sweep CSV")
    sweep.add_argument(
        "--parameter", dest="sweep.parameter", choices=_choices(SweepParameter)
    )
    sweep.add_argument("--values", dest="sweep.values", type=_list_of(float))
    _add_subspace_flags(sweep, "--subspace-seed")
    _add_detector_flags(sweep)
    _add_evaluation_flags(sweep)
    _add_common(sweep)

    import_csv = commands.add_parser("import-csv", help="Convert CSV to a dataset")
    import_csv.add_argument("--csv", type=Path, required=True)
    import_csv.add_argument("--out", type=Path, required=True)
    _add_common(import_csv)

    export_csv = commands.add_parser("export-csv", help="Convert a dataset to CSV")
    export_csv.add_argument("--data", type=Path, required=True)
    export_csv.add_argument("--out", type=Path, required=True)
    _add_common(export_csv)

    return parser


def overrides_from(args: argparse.Namespace) -> dict[str, Any]:
    """Nested RunConfig overrides from every dotted flag that was given."""
    overrides: dict[str, Any] = {}
    for dest, value in vars(args).items():
        if "." not in dest or value is None:
            continue
        *sections, key = dest.split(".")
        node = overrides
        for section in sections:
            node = node.setdefault(section, {})
        node[key] = value
    return overrides

