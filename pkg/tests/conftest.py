"""
Pytest configuration and fixtures.
"""

from collections.abc import Callable

import numpy as np
import pytest

from grad_subspace_ood.config.config import RunConfig, TrainConfig
from grad_subspace_ood.evaluation.synth import (
    SynthData,
    default_synth_config,
    generate_synth,
)
from grad_subspace_ood.micronet.artifact import ModelArtifact
from grad_subspace_ood.micronet.model import (
    ModelSpec,
    ParamVector,
    SampleBatch,
    init_params,
)
from grad_subspace_ood.micronet.training import train_classifier

RandomModel = Callable[..., tuple[ModelSpec, ParamVector, SampleBatch]]


@pytest.fixture
def rng() -> np.random.Generator:
    """
    Fixture that provides a seeded random generator.
    """
    return np.random.default_rng(1234)


@pytest.fixture
def random_model() -> RandomModel:
    """
    Factory for small random models with a matching random batch.

    Returns:
        RandomModel: ``make(seed, layer_dims=None, n=8, affine_norm=False)``
    """

    def make(
        seed: int,
        layer_dims: list[int] | None = None,
        n: int = 8,
        affine_norm: bool = False,
    ) -> tuple[ModelSpec, ParamVector, SampleBatch]:
        gen = np.random.default_rng(seed)
        dims = layer_dims or [3, 5, 4, 3]
        spec = ModelSpec(layer_dims=dims, has_affine_norm_per_hidden=affine_norm)
        base = init_params(spec, seed)
        # Spread the parameters so ReLUs switch and softmax is far from uniform
        values = base.values * 2.0 + 0.1 * gen.standard_normal(spec.num_params)
        params = ParamVector.for_spec(spec, values)
        labels = gen.integers(0, dims[-1], size=n)
        batch = SampleBatch(gen.standard_normal((n, dims[0])), labels)
        return spec, params, batch

    return make


@pytest.fixture(scope="session")
def toy_data() -> SynthData:
    """
    The bundled synthetic benchmark at seed 0.
    """
    return generate_synth(default_synth_config(seed=0))


@pytest.fixture(scope="session")
def toy_model(toy_data: SynthData) -> ModelArtifact:
    """
    Classifier trained on the bundled benchmark, shared by the whole session.
    """
    config = TrainConfig(hidden_dims=[32, 32], epochs=30, seed=0)
    spec = ModelSpec(layer_dims=[toy_data.train.dim, 32, 32, 4])
    trained = train_classifier(spec, toy_data.train, config)
    run_config = RunConfig(train=config).echo()
    return ModelArtifact(spec, trained.params, config.seed, run_config)


@pytest.fixture
def small_run_config() -> RunConfig:
    """
    Run configuration sized for fast pipeline tests.
    """
    return RunConfig.model_validate(
        {
            "subspace": {"k": 8, "iters": 30, "seed": 0},
            "detector": {"kind": "knn", "knn_k": 10},
            "runtime": {"threads": 1, "chunk_size": 128},
        }
    )
