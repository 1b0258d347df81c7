"""
Test configuration settings module.

This module contains tests for verifying ambient settings and the
layered resolution of run configurations.

Returns:
    None: These tests verify configuration behavior
"""

import json
from pathlib import Path

import pytest
from pydantic import ValidationError

from grad_subspace_ood.config import TOOL_VERSION
from grad_subspace_ood.config.config import (
    DetectorKind,
    LogLevel,
    RunConfig,
    Settings,
    SubspaceKind,
    resolve_run_config,
)


def test_settings_load() -> None:
    """
    Test that settings can be loaded correctly.

    Returns:
        None: Verifies basic settings are loaded with expected values
    """
    settings = Settings()
    assert settings.APP_NAME == "grad-subspace-ood"
    assert settings.APP_VERSION == TOOL_VERSION
    assert settings.THREADS >= 1
    assert settings.CHUNK_SIZE >= 1


def test_settings_from_environment(monkeypatch: pytest.MonkeyPatch) -> None:
    """
    Test that GSO_-prefixed environment variables override defaults.

    Args:
        monkeypatch: Pytest environment patcher

    Returns:
        None: Verifies the environment layer
    """
    monkeypatch.setenv("GSO_THREADS", "4")
    monkeypatch.setenv("GSO_LOG_LEVEL", "DEBUG")
    monkeypatch.setenv("GSO_JSON_LOGS", "true")
    settings = Settings()
    assert settings.THREADS == 4
    assert settings.LOG_LEVEL == LogLevel.DEBUG
    assert settings.JSON_LOGS is True


@pytest.mark.parametrize(
    "overrides",
    [
        {"LOG_FORMAT": "%(levelname)s only"},
        {"APP_VERSION": "0.0.0-other"},
        {"THREADS": 0},
    ],
)
def test_invalid_settings(overrides: dict[str, object]) -> None:
    """
    Test that invalid settings are rejected.

    Args:
        overrides: Settings values to validate

    Returns:
        None: Verifies validation errors
    """
    with pytest.raises(ValidationError):
        Settings(**overrides)


def test_run_config_defaults() -> None:
    """
    Test the documented defaults of a run configuration.

    Returns:
        None: Verifies a few defaults from every section
    """
    config = RunConfig()
    assert config.subspace.kind == SubspaceKind.PCA
    assert config.subspace.k == 16
    assert config.detector.kind == DetectorKind.KNN
    assert config.detector.alpha == 1.0
    assert config.detector.head.lr == 0.01
    assert config.detector.head.batch_size == 512
    assert config.evaluation.tpr_target == 0.95


def test_resolution_precedence(tmp_path: Path) -> None:
    """
    Test that flags beat the file, which beats ambient settings and defaults.

    Args:
        tmp_path: Temporary directory

    Returns:
        None: Verifies the merge order per key
    """
    config_file = tmp_path / "run.json"
    config_file.write_text(
        json.dumps({"subspace": {"k": 8, "iters": 5}, "runtime": {"threads": 2}}),
        encoding="utf-8",
    )
    config = resolve_run_config(
        config_file,
        overrides={"subspace": {"k": 4}},
        ambient={"runtime": {"threads": 3, "chunk_size": 64}},
    )
    assert config.subspace.k == 4
    assert config.subspace.iters == 5
    assert config.runtime.threads == 2
    assert config.runtime.chunk_size == 64
    assert config.subspace.tol == RunConfig().subspace.tol


@pytest.mark.parametrize(
    "document",
    [
        {"subspace": {"kk": 3}},
        {"unknown_section": {}},
        {"detector": {"kind": "nearest"}},
        {"subspace": {"k": 0}},
    ],
)
def test_invalid_config_documents(tmp_path: Path, document: dict) -> None:
    """
    Test that unknown keys and invalid values fail validation.

    Args:
        tmp_path: Temporary directory
        document: Config file content

    Returns:
        None: Verifies validation errors from the file layer
    """
    config_file = tmp_path / "bad.json"
    config_file.write_text(json.dumps(document), encoding="utf-8")
    with pytest.raises(ValidationError):
        resolve_run_config(config_file)


def test_config_file_must_be_object(tmp_path: Path) -> None:
    """
    Test that a JSON document other than an object is rejected.

    Args:
        tmp_path: Temporary directory

    Returns:
        None: Verifies the ValueError
    """
    config_file = tmp_path / "list.json"
    config_file.write_text("[1, 2]", encoding="utf-8")
    with pytest.raises(ValueError, match="JSON object"):
        resolve_run_config(config_file)


def test_with_overrides_and_echo() -> None:
    """
    Test that overrides produce a validated copy and echo round-trips.

    Returns:
        None: Verifies immutability and the echo form
    """
    base = RunConfig()
    changed = base.with_overrides({"detector": {"kind": "maha", "head": {"epochs": 7}}})
    assert base.detector.kind == DetectorKind.KNN
    assert changed.detector.kind == DetectorKind.MAHA
    assert changed.detector.head.epochs == 7
    assert RunConfig.model_validate(changed.echo()) == changed
    with pytest.raises(ValidationError):
        base.subspace.k = 3  # type: ignore[misc]
