"""
Seeded Gaussian-mixture benchmarks standing in for image datasets.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from grad_subspace_ood.config.config import GaussianComponent, SynthConfig
from grad_subspace_ood.micronet.model import SampleBatch
from grad_subspace_ood.storage.datasets import load_dataset, save_dataset
from grad_subspace_ood.utils.errors import ConfigurationError, FormatError, UsageError
from grad_subspace_ood.utils.logger import logger

NEAR_OOD = "near"
FAR_OOD = "far"

TRAIN_FILE = "train.gsd"
ID_TEST_FILE = "id.gsd"
OOD_PREFIX = "ood_"


@dataclass(frozen=True)
class SynthData:
    """Train and ID-test splits plus named OOD sets."""

    train: SampleBatch
    id_test: SampleBatch
    ood_sets: dict[str, SampleBatch] = field(default_factory=dict)


def default_synth_config(
    dim: int = 8, seed: int = 0, spread: float = 4.0
) -> SynthConfig:
    """
    The bundled benchmark.

    Four unit-σ ID classes at ``spread · e_c`` with 625 samples each (2000 train
    and 500 test at the default 0.2 test fraction), a near OOD set of 500 at
    the centroid of the class means and a far OOD set of 500 at least 8σ from
    every class mean.
    """
    if dim < 4:
        raise UsageError("the default benchmark needs dim >= 4")
    id_components = []
    for c in range(4):
        mean = [0.0] * dim
        mean[c] = spread
        id_components.append(
            GaussianComponent(mean=mean, scale=1.0, count=625, label=c)
        )
    centroid = [spread / 4.0] * 4 + [0.0] * (dim - 4)
    far = [3.0 * spread] * 4 + [0.0] * (dim - 4)
    return SynthConfig(
        id_components=id_components,
        ood_components=[
            GaussianComponent(mean=centroid, scale=1.0, count=500, name=NEAR_OOD),
            GaussianComponent(mean=far, scale=1.0, count=500, name=FAR_OOD),
        ],
        test_fraction=0.2,
        seed=seed,
        dim=dim,
        spread=spread,
    )


def resolve_synth_config(config: SynthConfig) -> SynthConfig:
    """``config`` itself, or the bundled benchmark when it lists no components."""
    if config.id_components:
        return config
    bundled = default_synth_config(config.dim, config.seed, config.spread)
    return bundled.model_copy(update={"test_fraction": config.test_fraction})


def _draw(rng: np.random.Generator, component: GaussianComponent) -> np.ndarray:
    mean = np.asarray(component.mean, dtype=np.float64)
    return mean + component.scale * rng.standard_normal((component.count, mean.size))


def generate_synth(config: SynthConfig) -> SynthData:
    """
    Sample a benchmark deterministically from ``config.seed``.

    Each ID component contributes ``round(count · test_fraction)`` rows to the
    test split and the rest to the train split; OOD components sharing a name
    form one set.

    Raises:
        UsageError: No ID components, or a split would be empty
        ConfigurationError: Component means differ in length
    """
    if not config.id_components:
        raise UsageError("a synthetic benchmark needs at least one id component")
    dims = {len(c.mean) for c in [*config.id_components, *config.ood_components]}
    if len(dims) != 1:
        raise ConfigurationError(f"component means have differing lengths {dims}")

    rng = np.random.default_rng(config.seed)
    train_x, train_y, test_x, test_y = [], [], [], []
    for component in config.id_components:
        samples = _draw(rng, component)
        n_test = int(round(component.count * config.test_fraction))
        n_train = component.count - n_test
        train_x.append(samples[:n_train])
        test_x.append(samples[n_train:])
        train_y.append(np.full(n_train, component.label, dtype=np.int64))
        test_y.append(np.full(n_test, component.label, dtype=np.int64))

    ood_parts: dict[str, list[np.ndarray]] = {}
    for component in config.ood_components:
        ood_parts.setdefault(str(component.name), []).append(_draw(rng, component))

    train = SampleBatch(np.concatenate(train_x), np.concatenate(train_y))
    id_test = SampleBatch(np.concatenate(test_x), np.concatenate(test_y))
    if len(train) == 0 or len(id_test) == 0:
        raise UsageError("test_fraction leaves an empty train or test split")
    ood_sets = {
        name: SampleBatch(np.concatenate(parts)) for name, parts in ood_parts.items()
    }
    logger.info(
        f"Generated synthetic benchmark: {len(train)} train, {len(id_test)} ID test, "
        f"OOD sets {', '.join(f'{k}={len(v)}' for k, v in ood_sets.items()) or 'none'}"
    )
    return SynthData(train, id_test, ood_sets)


def save_synth(
    data: SynthData, directory: str | Path, metadata: dict[str, Any] | None = None
) -> list[Path]:
    """
    Write every split of ``data`` as a dataset file under ``directory``.

    Layout: ``train.gsd``, ``id.gsd`` and one ``ood_<name>.gsd`` per OOD set.

    Returns:
        list[Path]: Written dataset files
    """
    target = Path(directory)
    files = {TRAIN_FILE: data.train, ID_TEST_FILE: data.id_test}
    for name, batch in data.ood_sets.items():
        files[f"{OOD_PREFIX}{name}.gsd"] = batch
    written = []
    for filename, batch in files.items():
        split = filename.removesuffix(".gsd")
        save_dataset(batch, target / filename, {"split": split, **(metadata or {})})
        written.append(target / filename)
    return written


def load_synth(directory: str | Path) -> SynthData:
    """
    Read a benchmark directory written by ``save_synth``.

    OOD sets are returned in file-name order.

    Raises:
        FormatError: The directory or a split file is missing or corrupt
    """
    source = Path(directory)
    if not source.is_dir():
        raise FormatError(f"{source}: dataset directory not found")
    ood_sets = {
        path.name.removeprefix(OOD_PREFIX).removesuffix(".gsd"): load_dataset(path)
        for path in sorted(source.glob(f"{OOD_PREFIX}*.gsd"))
    }
    return SynthData(
        load_dataset(source / TRAIN_FILE),
        load_dataset(source / ID_TEST_FILE),
        ood_sets,
    )
