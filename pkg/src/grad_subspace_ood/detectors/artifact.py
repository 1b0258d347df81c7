"""
Detector artifact I/O.

Layout (little-endian)::

    "GSO-DET\\0\\0" | u16 version=1 | u8 kind | u32 K | kind payload | u32 CRC32

Head kinds (msp, energy, react, bats)::

    u32 C | f32 bn_epsilon | f32 temperature | u8 normalize
    | f32[K] bn_mean, bn_var, bn_scale, bn_shift | f32[C·K] fc_weight | f32[C] fc_bias
    | u8 clip method | u32 d | f32 percentile | f32 lambda
    | u8 has_threshold | f32[1 or 0] threshold
    | u8 has_typical_set | f32[d or 0] mu | f32[d or 0] delta

maha: ``u32 C | f32[C·K] class_means | f32[K·K] shared_cov``

knn: ``u32 n | u32 k | u8 normalize | f32[n·K] bank``

Head accuracy and fit metadata go to the JSON sidecar.
"""

from pathlib import Path
from typing import Any

from grad_subspace_ood.config import TOOL_VERSION
from grad_subspace_ood.config.config import ClipMethod, DetectorKind
from grad_subspace_ood.detectors.base import HEAD_KINDS, FittedDetector
from grad_subspace_ood.detectors.clipping import ClipConfig, ClipState
from grad_subspace_ood.detectors.distance import KnnModel, MahaModel
from grad_subspace_ood.detectors.head import LinearHead
from grad_subspace_ood.storage.container import (
    ContainerReader,
    ContainerWriter,
    atomic_write_bytes,
    read_bytes,
    write_sidecar,
)
from grad_subspace_ood.utils.errors import FormatError, GsoError, InvariantError
from grad_subspace_ood.utils.logger import logger

DETECTOR_MAGIC = b"GSO-DET\x00\x00"

_KIND_CODES = {
    DetectorKind.MSP: 0,
    DetectorKind.ENERGY: 1,
    DetectorKind.REACT: 2,
    DetectorKind.BATS: 3,
    DetectorKind.MAHA: 4,
    DetectorKind.KNN: 5,
}
_CODE_KINDS = {code: kind for kind, code in _KIND_CODES.items()}
_CLIP_CODES = {ClipMethod.NONE: 0, ClipMethod.REACT: 1, ClipMethod.BATS: 2}
_CODE_CLIPS = {code: method for method, code in _CLIP_CODES.items()}


def _encode_head(writer: ContainerWriter, detector: FittedDetector) -> None:
    head, clip = detector.head, detector.clip or ClipConfig()
    if head is None:
        raise InvariantError(f"{detector.kind.value} detector has no head")
    state = detector.clip_state or ClipState()
    writer.u32(head.num_classes)
    writer.f32_array([head.bn_epsilon, detector.temperature])
    writer.u8(1 if head.normalize else 0)
    for vector in (head.bn_mean, head.bn_var, head.bn_scale, head.bn_shift):
        writer.f32_array(vector)
    writer.f32_array(head.fc_weight)
    writer.f32_array(head.fc_bias)
    writer.u8(_CLIP_CODES[clip.method])
    writer.u32(clip.tail_dims)
    writer.f32_array([clip.percentile, clip.bats_lambda])
    writer.u8(0 if state.threshold is None else 1)
    writer.f32_array([] if state.threshold is None else [state.threshold])
    has_typical_set = state.mu is not None and state.delta is not None
    writer.u8(1 if has_typical_set else 0)
    writer.f32_array(state.mu if has_typical_set else [])
    writer.f32_array(state.delta if has_typical_set else [])


def encode_detector(detector: FittedDetector) -> bytes:
    writer = ContainerWriter(DETECTOR_MAGIC)
    writer.u8(_KIND_CODES[detector.kind])
    writer.u32(detector.k)
    if detector.kind in HEAD_KINDS:
        _encode_head(writer, detector)
    elif detector.kind == DetectorKind.MAHA and detector.maha is not None:
        writer.u32(detector.maha.class_means.shape[0])
        writer.f32_array(detector.maha.class_means)
        writer.f32_array(detector.maha.shared_cov)
    elif detector.kind == DetectorKind.KNN and detector.knn is not None:
        writer.u32(detector.knn.bank.shape[0])
        writer.u32(detector.knn.k)
        writer.u8(1 if detector.knn.normalize else 0)
        writer.f32_array(detector.knn.bank)
    else:
        raise InvariantError(f"{detector.kind.value} detector is missing its state")
    return writer.finish()


def _decode_head(
    reader: ContainerReader, kind: DetectorKind, k: int, source: str
) -> FittedDetector:
    c = reader.u32()
    bn_epsilon, temperature = reader.f32_array(2)
    normalize = reader.u8() == 1
    bn_mean, bn_var, bn_scale, bn_shift = (reader.f32_array(k) for _ in range(4))
    fc_weight = reader.f32_array(c * k).reshape(c, k)
    fc_bias = reader.f32_array(c)
    clip_code = reader.u8()
    if clip_code not in _CODE_CLIPS:
        raise FormatError(f"{source}: unknown clip method code {clip_code}")
    tail_dims = reader.u32()
    percentile, bats_lambda = reader.f32_array(2)
    threshold = reader.f32_array(1)[0] if reader.u8() else None
    mu = delta = None
    if reader.u8():
        mu, delta = reader.f32_array(tail_dims), reader.f32_array(tail_dims)
    head = LinearHead(
        bn_mean,
        bn_var,
        bn_scale,
        bn_shift,
        fc_weight,
        fc_bias,
        float(bn_epsilon),
        normalize,
    )
    clip = ClipConfig(
        method=_CODE_CLIPS[clip_code],
        tail_dims=tail_dims,
        percentile=percentile,
        bats_lambda=bats_lambda,
    )
    has_state = threshold is not None or mu is not None
    return FittedDetector(
        kind=kind,
        k=k,
        temperature=float(temperature),
        head=head,
        clip=clip,
        clip_state=ClipState(threshold, mu, delta) if has_state else None,
    )


def decode_detector(data: bytes, source: str = "<memory>") -> FittedDetector:
    """
    Decode and validate a detector artifact.

    Raises:
        FormatError: Bad framing, CRC, codes or length
        InvariantError: Decoded state violates detector invariants
    """
    reader = ContainerReader(data, DETECTOR_MAGIC, source)
    code = reader.u8()
    if code not in _CODE_KINDS:
        raise FormatError(f"{source}: unknown detector kind code {code}")
    kind = _CODE_KINDS[code]
    k = reader.u32()
    try:
        if kind in HEAD_KINDS:
            detector = _decode_head(reader, kind, k, source)
        elif kind == DetectorKind.MAHA:
            c = reader.u32()
            means = reader.f32_array(c * k).reshape(c, k)
            cov = reader.f32_array(k * k).reshape(k, k)
            detector = FittedDetector(kind=kind, k=k, maha=MahaModel(means, cov))
        else:
            n = reader.u32()
            knn_k = reader.u32()
            normalize = reader.u8() == 1
            bank = reader.f32_array(n * k).reshape(n, k)
            knn = KnnModel(bank, knn_k, normalize)
            detector = FittedDetector(kind=kind, k=k, knn=knn)
    except FormatError:
        raise
    except (GsoError, ValueError) as e:
        raise InvariantError(f"{source}: invalid {kind.value} detector ({e})") from e
    reader.expect_end()
    return detector


def save_detector(
    detector: FittedDetector,
    path: str | Path,
    run_config: dict[str, Any] | None = None,
) -> None:
    """Write the detector blob and its metadata sidecar atomically."""
    atomic_write_bytes(path, encode_detector(detector))
    write_sidecar(
        path,
        {
            "artifact": "detector",
            "tool_version": TOOL_VERSION,
            "kind": detector.kind.value,
            "k": detector.k,
            "train_accuracy": detector.train_accuracy,
            "heldout_accuracy": detector.heldout_accuracy,
            "run_config": run_config or {},
        },
    )
    logger.info(f"Saved {detector.kind.value} detector to {path}")


def load_detector(path: str | Path) -> FittedDetector:
    return decode_detector(read_bytes(path), str(path))
