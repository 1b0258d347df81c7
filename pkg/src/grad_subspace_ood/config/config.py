# src/grad_subspace_ood/config/config.py
"""
Configuration management module using Pydantic.

Two layers live here:

* ``Settings`` holds process-wide ambient settings (logging, threads, chunking)
  read from ``GSO_*`` environment variables and an optional ``.env`` file.
* ``RunConfig`` holds the fully resolved configuration of one command. It is
  built from defaults, an optional JSON config file and CLI overrides, and is
  echoed verbatim into every artifact the command writes.
"""

import json
import logging
from enum import Enum
from functools import lru_cache
from pathlib import Path
from typing import Any

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    field_validator,
    model_validator,
)
from pydantic_settings import BaseSettings, SettingsConfigDict

TOOL_VERSION = "0.1.0"


# Enums for validated string choices
class LogLevel(str, Enum):
    """Valid logging levels."""

    DEBUG = "DEBUG"
    INFO = "INFO"
    WARNING = "WARNING"
    ERROR = "ERROR"
    CRITICAL = "CRITICAL"


class Activation(str, Enum):
    """Supported hidden-layer activations."""

    RELU = "relu"


class SubspaceKind(str, Enum):
    """Valid subspace extraction methods."""

    PCA = "pca"
    CLASS_MEAN = "class_mean"


class DetectorKind(str, Enum):
    """Valid detector score functions."""

    MSP = "msp"
    ENERGY = "energy"
    REACT = "react"
    BATS = "bats"
    MAHA = "maha"
    KNN = "knn"


class ClipMethod(str, Enum):
    """Valid tail clipping methods for the linear head."""

    REACT = "react"
    BATS = "bats"
    NONE = "none"


class CovarianceMode(str, Enum):
    """Which covariance the Mahalanobis detector shares across classes."""

    POOLED = "pooled"
    GLOBAL = "global"


class SweepParameter(str, Enum):
    """Hyper-parameters that can be swept by the sensitivity study."""

    K = "k"
    TEMPERATURE = "temperature"
    REACT_PERCENTILE = "react_percentile"
    BATS_LAMBDA = "bats_lambda"
    KNN_K = "knn_k"


class _Section(BaseModel):
    """Base for config sections: frozen, and unknown keys are errors."""

    model_config = ConfigDict(extra="forbid", frozen=True)


class GaussianComponent(_Section):
    """One Gaussian blob of a synthetic benchmark."""

    mean: list[float] = Field(..., min_length=1)
    scale: float = Field(..., gt=0.0, description="Isotropic standard deviation")
    count: int = Field(..., ge=1)
    label: int | None = Field(default=None, ge=0)
    name: str | None = Field(default=None, description="OOD set name")


class SynthConfig(_Section):
    """Settings for synthetic benchmark generation."""

    id_components: list[GaussianComponent] = Field(default_factory=list)
    ood_components: list[GaussianComponent] = Field(default_factory=list)
    test_fraction: float = Field(default=0.2, gt=0.0, lt=1.0)
    seed: int = Field(default=0)
    dim: int = Field(
        default=8,
        ge=4,
        description="Input dim of the bundled benchmark (no components)",
    )
    spread: float = Field(
        default=4.0, gt=0.0, description="Class-mean distance of the bundled benchmark"
    )

    @field_validator("id_components")
    @classmethod
    def validate_id_labels(
        cls, value: list[GaussianComponent]
    ) -> list[GaussianComponent]:
        """ID components must carry a class label."""
        for component in value:
            if component.label is None:
                raise ValueError("every id component needs a label")
        return value

    @field_validator("ood_components")
    @classmethod
    def validate_ood_names(
        cls, value: list[GaussianComponent]
    ) -> list[GaussianComponent]:
        """OOD components must carry a set name and no label."""
        for component in value:
            if not component.name:
                raise ValueError("every ood component needs a name")
            if component.label is not None:
                raise ValueError("ood components cannot carry labels")
        return value


class TrainConfig(_Section):
    """Settings for classifier training."""

    hidden_dims: list[int] = Field(default=[32, 32])
    affine_norm: bool = Field(default=False)
    lr: float = Field(default=0.05, gt=0.0)
    momentum: float = Field(default=0.9, ge=0.0, lt=1.0)
    epochs: int = Field(default=50, ge=0)
    batch_size: int = Field(default=64, ge=1)
    seed: int = Field(default=0)
    label_smoothing: float = Field(default=0.1, ge=0.0, lt=1.0)

    @field_validator("hidden_dims")
    @classmethod
    def validate_hidden_dims(cls, value: list[int]) -> list[int]:
        """Hidden widths must be positive."""
        if any(width < 1 for width in value):
            raise ValueError("hidden_dims entries must be positive")
        return value


class SubspaceConfig(_Section):
    """Settings for subspace extraction."""

    kind: SubspaceKind = Field(default=SubspaceKind.PCA)
    k: int = Field(default=16, ge=1, description="Reduced dimension K")
    iters: int = Field(default=30, ge=1, description="Maximum power iterations T")
    tol: float = Field(default=1e-6, gt=0.0)
    seed: int = Field(default=0)
    epsilon: float = Field(default=1e-12, gt=0.0)
    orthonormalize: bool = Field(
        default=False, description="Gram-Schmidt the class-mean basis"
    )


class HeadConfig(_Section):
    """Settings for the auxiliary linear head."""

    lr: float = Field(default=0.01, gt=0.0)
    momentum: float = Field(default=0.9, ge=0.0, lt=1.0)
    batch_size: int = Field(default=512, ge=1)
    epochs: int = Field(default=3, ge=0)
    seed: int = Field(default=0)
    bn_momentum: float = Field(default=0.1, gt=0.0, le=1.0)
    bn_epsilon: float = Field(default=1e-5, gt=0.0)


class DetectorConfig(_Section):
    """Settings for detector fitting and scoring."""

    kind: DetectorKind = Field(default=DetectorKind.KNN)
    temperature: float = Field(default=1.0, gt=0.0)
    tail_dims: int = Field(default=50, ge=1, description="Clipped tail dimensions d")
    react_percentile: float = Field(default=70.0, gt=0.0, le=100.0)
    bats_lambda: float = Field(default=0.1, gt=0.0)
    knn_k: int = Field(default=10, ge=1)
    knn_normalize: bool = Field(default=False)
    ridge_scale: float = Field(default=1e-6, ge=0.0)
    covariance: CovarianceMode = Field(default=CovarianceMode.POOLED)
    alpha: float = Field(default=1.0, description="Ensemble weight")
    head: HeadConfig = Field(default_factory=HeadConfig)


class EvaluationConfig(_Section):
    """Settings for metric computation and report emission."""

    tpr_target: float = Field(default=0.95, gt=0.0, lt=1.0)
    histogram_bins: int = Field(default=30, ge=1)
    keep_intermediates: bool = Field(default=False)
    ensemble: bool = Field(default=True)


class SweepConfig(_Section):
    """Settings for the hyper-parameter sensitivity sweep."""

    parameter: SweepParameter = Field(default=SweepParameter.K)
    values: list[float] = Field(default_factory=lambda: [4.0, 8.0, 16.0])

    @field_validator("values")
    @classmethod
    def validate_values(cls, value: list[float]) -> list[float]:
        """A sweep needs at least one value."""
        if not value:
            raise ValueError("sweep values cannot be empty")
        return value


class RuntimeConfig(_Section):
    """Settings for execution resources."""

    threads: int = Field(default=1, ge=1)
    chunk_size: int = Field(default=256, ge=1)


class RunConfig(_Section):
    """Fully resolved configuration of one command."""

    synth: SynthConfig = Field(default_factory=SynthConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    subspace: SubspaceConfig = Field(default_factory=SubspaceConfig)
    detector: DetectorConfig = Field(default_factory=DetectorConfig)
    evaluation: EvaluationConfig = Field(default_factory=EvaluationConfig)
    sweep: SweepConfig = Field(default_factory=SweepConfig)
    runtime: RuntimeConfig = Field(default_factory=RuntimeConfig)

    def echo(self) -> dict[str, Any]:
        """Return the JSON-compatible form embedded into artifacts."""
        return self.model_dump(mode="json")

    def with_overrides(self, overrides: dict[str, Any]) -> "RunConfig":
        """Return a validated copy with nested ``overrides`` merged in."""
        return RunConfig.model_validate(_deep_merge(self.echo(), overrides))


def _deep_merge(base: dict[str, Any], overrides: dict[str, Any]) -> dict[str, Any]:
    """Merge ``overrides`` into ``base`` recursively, returning a new dict."""
    merged = dict(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def resolve_run_config(
    config_file: Path | None = None,
    overrides: dict[str, Any] | None = None,
    ambient: dict[str, Any] | None = None,
) -> RunConfig:
    """
    Resolve a RunConfig from defaults, an optional JSON file and CLI overrides.

    Args:
        config_file: Optional JSON document with a subset of RunConfig sections
        overrides: Nested dict of CLI-provided values (highest precedence)
        ambient: Nested dict from environment settings (lowest precedence)

    Returns:
        RunConfig: Validated, frozen configuration

    Raises:
        pydantic.ValidationError: If any key is unknown or any value invalid
        ValueError: If the config file is not a JSON object
    """
    document: dict[str, Any] = {}
    if config_file is not None:
        with open(config_file, encoding="utf-8") as f:
            loaded = json.load(f)
        if not isinstance(loaded, dict):
            raise ValueError(f"Config file {config_file} must hold a JSON object")
        document = loaded
    merged = _deep_merge(_deep_merge(ambient or {}, document), overrides or {})
    return RunConfig.model_validate(merged)


class Settings(BaseSettings):
    """Process-wide ambient settings."""

    APP_NAME: str = Field(default="grad-subspace-ood")
    APP_VERSION: str = Field(default=TOOL_VERSION)
    DEBUG: bool = Field(default=False)

    # Logging Settings
    LOG_LEVEL: LogLevel = Field(default=LogLevel.INFO)
    LOG_FILE: Path | None = Field(default=None)
    LOG_FORMAT: str = Field(
        default="%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    )
    JSON_LOGS: bool = Field(default=False)

    # Execution Settings
    THREADS: int = Field(default=1, ge=1, le=256)
    CHUNK_SIZE: int = Field(default=256, ge=1, le=1_000_000)

    @field_validator("LOG_FORMAT")
    @classmethod
    def validate_log_format(cls, value: str) -> str:
        """Ensure the log format carries the message."""
        if "%(message)s" not in value:
            raise ValueError("LOG_FORMAT must contain %(message)s")
        return value

    @model_validator(mode="after")
    def validate_version(self) -> "Settings":
        """Refuse a version that differs from the installed tool."""
        if self.APP_VERSION != TOOL_VERSION:
            raise ValueError(
                f"APP_VERSION {self.APP_VERSION} does not match {TOOL_VERSION}"
            )
        return self

    model_config = SettingsConfigDict(
        env_prefix="GSO_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
        case_sensitive=True,
        validate_default=True,
        frozen=True,
    )


@lru_cache
def get_settings() -> Settings:
    """Create and cache settings instance."""
    try:
        settings = Settings()
        if settings.DEBUG:
            logging.debug(f"Settings loaded successfully: {settings.model_dump()}")
        return settings
    except ValidationError as e:
        logging.error(f"Settings validation error: {e}")
        raise
    except Exception as e:
        logging.error(f"Unexpected error loading settings: {e}")
        raise


def reload_settings() -> Settings:
    """
    Force reload of settings by clearing the cache.

    Returns:
        Settings: Fresh settings instance
    """
    try:
        get_settings.cache_clear()
        global settings
        settings = get_settings()
        logging.info("Settings reloaded successfully")
        return settings
    except Exception as e:
        logging.error(f"Failed to reload settings: {str(e)}")
        raise


# Global settings Singleton instance
settings = get_settings()
