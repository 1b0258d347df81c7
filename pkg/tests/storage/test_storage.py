"""
Tests for the binary container, dataset files, CSV interchange and model artifacts.
"""

import json
from pathlib import Path

import numpy as np
import pytest

from grad_subspace_ood.micronet.artifact import (
    load_model,
    manifest_path,
    save_model,
)
from grad_subspace_ood.micronet.model import ModelSpec, SampleBatch, init_params
from grad_subspace_ood.storage.container import (
    ContainerReader,
    ContainerWriter,
    atomic_write_bytes,
    canonical_json,
    read_sidecar,
    sidecar_path,
    write_sidecar,
)
from grad_subspace_ood.storage.datasets import (
    decode_dataset,
    encode_dataset,
    export_csv,
    import_csv,
    load_dataset,
    load_scores,
    save_dataset,
    save_matrix,
)
from grad_subspace_ood.utils.errors import FormatError, InvariantError

MAGIC = b"TEST\x00"


@pytest.mark.unit
def test_container_fields_in_order() -> None:
    """
    Fields come back in the order and widths they were written.

    Returns:
        None: Verifies every primitive and the trailing-byte check
    """
    writer = ContainerWriter(MAGIC)
    writer.u8(7)
    writer.u16(513)
    writer.u32(70_000)
    writer.u64(2**40)
    writer.f32_array([0.5, -2.0])
    writer.u32_array([3, 1])
    reader = ContainerReader(writer.finish(), MAGIC)
    assert (reader.u8(), reader.u16(), reader.u32(), reader.u64()) == (
        7,
        513,
        70_000,
        2**40,
    )
    np.testing.assert_array_equal(reader.f32_array(2), [0.5, -2.0])
    np.testing.assert_array_equal(reader.u32_array(2), [3, 1])
    reader.expect_end()


@pytest.mark.unit
def test_container_rejects_damage() -> None:
    """
    Short input, wrong magic, CRC mismatch and reading past the end all fail.

    Returns:
        None: Verifies the framing guards
    """
    writer = ContainerWriter(MAGIC)
    writer.u32(1)
    data = writer.finish()
    with pytest.raises(FormatError, match="too short"):
        ContainerReader(data[:5], MAGIC)
    with pytest.raises(FormatError, match="magic"):
        ContainerReader(b"XXXX\x00" + data[5:], MAGIC)
    damaged = bytearray(data)
    damaged[-5] ^= 0xFF
    with pytest.raises(FormatError, match="CRC"):
        ContainerReader(bytes(damaged), MAGIC)
    reader = ContainerReader(data, MAGIC)
    with pytest.raises(FormatError, match="truncated"):
        reader.u64()


@pytest.mark.unit
def test_atomic_write_and_sidecar(tmp_path: Path) -> None:
    """
    Atomic writes create parent directories and leave no temp files behind.

    Returns:
        None: Verifies the write path and sidecar JSON
    """
    target = tmp_path / "nested" / "blob.bin"
    atomic_write_bytes(target, b"abc")
    assert target.read_bytes() == b"abc"
    assert [p.name for p in target.parent.iterdir()] == ["blob.bin"]
    write_sidecar(target, {"b": 1.5, "a": [1, 2]})
    assert sidecar_path(target).name == "blob.bin.meta.json"
    assert read_sidecar(target) == {"a": [1, 2], "b": 1.5}
    assert read_sidecar(tmp_path / "none.bin") == {}
    assert canonical_json({"b": 1, "a": 2}).index('"a"') < canonical_json(
        {"b": 1, "a": 2}
    ).index('"b"')


@pytest.mark.unit
def test_invalid_sidecar(tmp_path: Path) -> None:
    """
    A sidecar that is not a JSON object is a format error.

    Returns:
        None: Verifies both malformed cases
    """
    target = tmp_path / "x.bin"
    sidecar_path(target).write_text("[1, 2]", encoding="utf-8")
    with pytest.raises(FormatError):
        read_sidecar(target)
    sidecar_path(target).write_text("{not json", encoding="utf-8")
    with pytest.raises(FormatError):
        read_sidecar(target)


@pytest.mark.unit
def test_dataset_round_trip(tmp_path: Path, rng) -> None:
    """
    Saved datasets load back as float32-rounded values with exact labels.

    Returns:
        None: Verifies labelled and unlabelled files
    """
    batch = SampleBatch(rng.standard_normal((9, 3)), np.arange(9) % 2)
    path = tmp_path / "train.gsd"
    save_dataset(batch, path, {"split": "train"})
    loaded = load_dataset(path)
    stored = batch.inputs.astype(np.float32).astype(np.float64)
    np.testing.assert_array_equal(loaded.inputs, stored)
    np.testing.assert_array_equal(loaded.labels, batch.labels)
    assert read_sidecar(path)["split"] == "train"
    assert encode_dataset(loaded) == path.read_bytes()

    unlabeled = SampleBatch(rng.standard_normal((4, 2)))
    assert decode_dataset(encode_dataset(unlabeled)).labels is None


@pytest.mark.unit
def test_dataset_corruption(tmp_path: Path, rng) -> None:
    """
    Truncated, flipped or missing dataset files are format errors.

    Returns:
        None: Verifies each failure mode
    """
    data = encode_dataset(SampleBatch(rng.standard_normal((5, 2))))
    with pytest.raises(FormatError):
        decode_dataset(data[:-1])
    flipped = bytearray(data)
    flipped[25] ^= 0x10
    with pytest.raises(FormatError):
        decode_dataset(bytes(flipped))
    with pytest.raises(FormatError, match="not found"):
        load_dataset(tmp_path / "absent.gsd")


@pytest.mark.unit
def test_score_streams(tmp_path: Path) -> None:
    """
    Score vectors are stored as one-column matrices.

    Returns:
        None: Verifies save_matrix and load_scores, and the width check
    """
    save_matrix(np.array([0.25, -1.0, 3.5]), tmp_path / "s.gsd")
    np.testing.assert_array_equal(load_scores(tmp_path / "s.gsd"), [0.25, -1.0, 3.5])
    save_matrix(np.ones((2, 2)), tmp_path / "m.gsd")
    with pytest.raises(FormatError):
        load_scores(tmp_path / "m.gsd")


@pytest.mark.unit
def test_csv_round_trip(tmp_path: Path) -> None:
    """
    Exported CSV reimports to the same samples and labels.

    Returns:
        None: Verifies header layout and values
    """
    batch = SampleBatch(np.array([[0.1, 2.0], [-3.5, 1e-8]]), np.array([1, 0]))
    path = tmp_path / "data.csv"
    export_csv(batch, path)
    assert path.read_text(encoding="utf-8").splitlines()[0] == "x0,x1,label"
    again = import_csv(path)
    np.testing.assert_array_equal(again.inputs, batch.inputs)
    np.testing.assert_array_equal(again.labels, batch.labels)


@pytest.mark.unit
def test_csv_errors(tmp_path: Path) -> None:
    """
    Ragged rows, non-numeric cells and missing files are format errors.

    Returns:
        None: Verifies the CSV guards
    """
    ragged = tmp_path / "ragged.csv"
    ragged.write_text("x0,x1\n1,2\n3\n", encoding="utf-8")
    with pytest.raises(FormatError):
        import_csv(ragged)
    text = tmp_path / "text.csv"
    text.write_text("x0,label\nabc,1\n", encoding="utf-8")
    with pytest.raises(FormatError):
        import_csv(text)
    with pytest.raises(FormatError):
        import_csv(tmp_path / "absent.csv")


@pytest.mark.unit
def test_model_round_trip(tmp_path: Path) -> None:
    """
    A saved model restores its architecture, seed and run configuration.

    Returns:
        None: Verifies blob, manifest and byte-stable re-saving
    """
    spec = ModelSpec(layer_dims=[4, 6, 3], has_affine_norm_per_hidden=True)
    params = init_params(spec, 9)
    path = tmp_path / "model.gsm"
    save_model(path, spec, params, 9, {"train": {"epochs": 2}})
    loaded = load_model(path)
    assert loaded.spec == spec and loaded.seed == 9
    assert loaded.run_config == {"train": {"epochs": 2}}
    stored = params.values.astype(np.float32).astype(np.float64)
    np.testing.assert_array_equal(loaded.params.values, stored)
    again = tmp_path / "again.gsm"
    save_model(again, loaded.spec, loaded.params, loaded.seed, loaded.run_config)
    assert again.read_bytes() == path.read_bytes()
    assert manifest_path(again).read_text() == manifest_path(path).read_text()


@pytest.mark.unit
def test_model_manifest_errors(tmp_path: Path) -> None:
    """
    Missing or inconsistent manifests fail with format or invariant errors.

    Returns:
        None: Verifies manifest validation
    """
    spec = ModelSpec(layer_dims=[2, 3])
    path = tmp_path / "model.gsm"
    save_model(path, spec, init_params(spec, 0), 0)
    manifest = manifest_path(path)
    text = manifest.read_text(encoding="utf-8")
    manifest.write_text(text.replace("layer_dims=2,3", "layer_dims=2,4"))
    with pytest.raises(InvariantError):
        load_model(path)
    manifest.write_text("layer_dims\n")
    with pytest.raises(FormatError):
        load_model(path)
    manifest.write_text(text.replace("seed=0", "seed=zero"))
    with pytest.raises(FormatError):
        load_model(path)
    manifest.unlink()
    with pytest.raises(FormatError, match="manifest not found"):
        load_model(path)
    assert json.loads(text.split("run_config=", 1)[1]) == {}
