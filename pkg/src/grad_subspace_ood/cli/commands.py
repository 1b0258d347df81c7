"""
One function per ``gso`` sub-command.

Every command takes the parsed arguments and the resolved run configuration,
writes its outputs atomically, echoes the configuration into them and returns
the paths it wrote. Inputs are never modified.
"""

import argparse
from collections.abc import Callable
from pathlib import Path

import numpy as np

from grad_subspace_ood.config.config import RunConfig
from grad_subspace_ood.detectors.artifact import load_detector, save_detector
from grad_subspace_ood.detectors.base import fit_detector
from grad_subspace_ood.detectors.head import model_output_head
from grad_subspace_ood.evaluation.pipeline import fit_subspace, run_pipeline, run_sweep
from grad_subspace_ood.evaluation.reporting import (
    render_spectrum_csv,
    render_sweep_csv,
    write_report,
)
from grad_subspace_ood.evaluation.synth import (
    generate_synth,
    load_synth,
    resolve_synth_config,
    save_synth,
)
from grad_subspace_ood.micronet.artifact import load_model, save_model
from grad_subspace_ood.micronet.autodiff import penultimate_features
from grad_subspace_ood.micronet.model import ModelSpec, SampleBatch
from grad_subspace_ood.micronet.training import train_classifier
from grad_subspace_ood.storage.container import atomic_write_text
from grad_subspace_ood.storage.datasets import (
    export_csv,
    import_csv,
    load_dataset,
    save_dataset,
    save_matrix,
)
from grad_subspace_ood.subspace.artifact import load_subspace, save_subspace
from grad_subspace_ood.subspace.basis import embed_projected, spectrum
from grad_subspace_ood.utils.errors import ConfigurationError, UsageError
from grad_subspace_ood.utils.logger import logger
from grad_subspace_ood.utils.metrics import log_stage

Command = Callable[[argparse.Namespace, RunConfig], list[Path]]


def _labels_of(batch: SampleBatch, path: Path) -> np.ndarray:
    if batch.labels is None:
        raise UsageError(f"{path} has no labels")
    return batch.labels


def _num_classes(labels: np.ndarray, requested: int | None) -> int:
    largest = int(labels.max()) + 1 if labels.size else 0
    if requested is None:
        return largest
    if requested < largest:
        raise UsageError(f"--num-classes {requested} is below the label range")
    return requested


def cmd_synth(args: argparse.Namespace, config: RunConfig) -> list[Path]:
    """Generate the configured (or bundled) benchmark into a directory."""
    synth_config = resolve_synth_config(config.synth)
    resolved = config.with_overrides({"synth": synth_config.model_dump(mode="json")})
    with log_stage("synth", seed=synth_config.seed):
        data = generate_synth(synth_config)
        return save_synth(data, args.out, {"run_config": resolved.echo()})


def cmd_train(args: argparse.Namespace, config: RunConfig) -> list[Path]:
    """Train a classifier on a labelled dataset and save the model artifact."""
    with log_stage("load_inputs"):
        data = load_dataset(args.data)
        num_classes = _num_classes(_labels_of(data, args.data), args.num_classes)
    train_config = config.train
    spec = ModelSpec(
        layer_dims=[data.dim, *train_config.hidden_dims, num_classes],
        has_affine_norm_per_hidden=train_config.affine_norm,
    )
    with log_stage("train", params=spec.num_params):
        trained = train_classifier(spec, data, train_config)
        save_model(args.out, spec, trained.params, train_config.seed, config.echo())
    return [args.out]


def cmd_fit_subspace(args: argparse.Namespace, config: RunConfig) -> list[Path]:
    """Fit a pca or class-mean subspace of normalized training gradients."""
    with log_stage("load_inputs"):
        model = load_model(args.model)
        data = load_dataset(args.data)
    with log_stage("fit_subspace", kind=config.subspace.kind.value):
        sub = fit_subspace(model, data, config)
        save_subspace(sub, args.out, config.echo())
    return [args.out]


def cmd_embed(args: argparse.Namespace, config: RunConfig) -> list[Path]:
    """Embed a dataset as projected gradients or penultimate features."""
    with log_stage("load_inputs"):
        model = load_model(args.model)
        data = load_dataset(args.data)
        sub = load_subspace(args.subspace) if args.subspace is not None else None
    with log_stage("embed", features=args.features):
        if args.features == "gradient":
            if sub is None:
                raise UsageError("gradient embeddings need --subspace")
            if sub.num_params != model.spec.num_params:
                raise ConfigurationError(
                    f"{args.subspace} covers {sub.num_params} params, "
                    f"{args.model} has {model.spec.num_params}"
                )
            runtime = config.runtime
            values = embed_projected(
                model.spec, model.params, data, sub, runtime.chunk_size, runtime.threads
            )
        else:
            values = penultimate_features(model.spec, model.params, data)
        save_matrix(
            values,
            args.out,
            data.labels,
            {"features": args.features, "run_config": config.echo()},
        )
    return [args.out]


def cmd_fit_detector(args: argparse.Namespace, config: RunConfig) -> list[Path]:
    """Fit the configured detector on labelled training embeddings."""
    with log_stage("load_inputs"):
        train = load_dataset(args.embeddings)
        labels = _labels_of(train, args.embeddings)
        num_classes = _num_classes(labels, args.num_classes)
        heldout = None
        if args.heldout is not None:
            held = load_dataset(args.heldout)
            heldout = (held.inputs, _labels_of(held, args.heldout))
        head = None
        if args.model is not None:
            model = load_model(args.model)
            head = model_output_head(model.spec, model.params)
    with log_stage("fit_detector", detector=config.detector.kind.value):
        detector = fit_detector(
            config.detector, train.inputs, labels, num_classes, heldout, head
        )
        save_detector(detector, args.out, config.echo())
    return [args.out]


def cmd_score(args: argparse.Namespace, config: RunConfig) -> list[Path]:
    """Score an embedding file with a fitted detector."""
    with log_stage("load_inputs"):
        detector = load_detector(args.detector)
        embeddings = load_dataset(args.embeddings)
    with log_stage("score", detector=detector.kind.value):
        runtime = config.runtime
        scores = detector.score(embeddings.inputs, runtime.chunk_size, runtime.threads)
        save_matrix(
            scores,
            args.out,
            metadata={"detector": detector.kind.value, "run_config": config.echo()},
        )
    return [args.out]


def cmd_eval(args: argparse.Namespace, config: RunConfig) -> list[Path]:
    """Run the full pipeline on a benchmark directory and write the report."""
    with log_stage("load_inputs"):
        model = load_model(args.model)
        data = load_synth(args.data)
        sub = load_subspace(args.subspace) if args.subspace is not None else None
    result = run_pipeline(model, data, config, subspace=sub, workdir=args.out)
    with log_stage("write_report"):
        return write_report(result.report, args.out)


def cmd_spectrum(args: argparse.Namespace, config: RunConfig) -> list[Path]:
    """Write the explained-variance spectrum of a pca subspace as CSV."""
    with log_stage("load_inputs"):
        sub = load_subspace(args.subspace)
    with log_stage("spectrum", k=sub.k):
        atomic_write_text(args.out, render_spectrum_csv(spectrum(sub)))
    return [args.out]


def cmd_sweep(args: argparse.Namespace, config: RunConfig) -> list[Path]:
    """Re-evaluate over the configured values of one hyper-parameter."""
    with log_stage("load_inputs"):
        model = load_model(args.model)
        data = load_synth(args.data)
    rows = run_sweep(model, data, config)
    with log_stage("write_sweep", rows=len(rows)):
        atomic_write_text(args.out, render_sweep_csv(row.as_tuple() for row in rows))
    return [args.out]


def cmd_import_csv(args: argparse.Namespace, config: RunConfig) -> list[Path]:
    """Convert a CSV file into a dataset file."""
    with log_stage("import_csv"):
        batch = import_csv(args.csv)
        save_dataset(batch, args.out, {"source_csv": str(args.csv)})
    return [args.out]


def cmd_export_csv(args: argparse.Namespace, config: RunConfig) -> list[Path]:
    """Convert a dataset file into CSV."""
    with log_stage("export_csv"):
        export_csv(load_dataset(args.data), args.out)
    return [args.out]


COMMANDS: dict[str, Command] = {
    "synth": cmd_synth,
    "train": cmd_train,
    "fit-subspace": cmd_fit_subspace,
    "embed": cmd_embed,
    "fit-detector": cmd_fit_detector,
    "score": cmd_score,
    "eval": cmd_eval,
    "spectrum": cmd_spectrum,
    "sweep": cmd_sweep,
    "import-csv": cmd_import_csv,
    "export-csv": cmd_export_csv,
}


def run_command(args: argparse.Namespace, config: RunConfig) -> list[Path]:
    """Dispatch to the sub-command named by ``args.command``."""
    written = COMMANDS[args.command](args, config)
    for path in written:
        logger.info(f"Wrote {path}")
    return written
