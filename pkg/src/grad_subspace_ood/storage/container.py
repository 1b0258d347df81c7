"""
Binary container primitives shared by every artifact format.

A container is ``magic | u16 version | body | u32 CRC32`` with all integers
and floats little-endian. The CRC covers every preceding byte, so truncation
and bit flips surface as ``FormatError`` before any field is decoded.
"""

import json
import os
import struct
import tempfile
import zlib
from pathlib import Path
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray

from grad_subspace_ood.utils.errors import FormatError

FORMAT_VERSION = 1
SIDECAR_SUFFIX = ".meta.json"

_F32 = np.dtype("<f4")
_U32 = np.dtype("<u4")


class ContainerWriter:
    """Accumulates a container body and seals it with a CRC."""

    def __init__(self, magic: bytes, version: int = FORMAT_VERSION) -> None:
        self._parts: list[bytes] = [magic, struct.pack("<H", version)]

    def u8(self, value: int) -> None:
        self._parts.append(struct.pack("<B", value))

    def u16(self, value: int) -> None:
        self._parts.append(struct.pack("<H", value))

    def u32(self, value: int) -> None:
        self._parts.append(struct.pack("<I", value))

    def u64(self, value: int) -> None:
        self._parts.append(struct.pack("<Q", value))

    def f32_array(self, values: ArrayLike) -> None:
        """Append values as little-endian float32, flattened in C order."""
        self._parts.append(np.ascontiguousarray(values, dtype=_F32).tobytes())

    def u32_array(self, values: ArrayLike) -> None:
        self._parts.append(np.ascontiguousarray(values, dtype=_U32).tobytes())

    def finish(self) -> bytes:
        body = b"".join(self._parts)
        return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


class ContainerReader:
    """Validates framing up front, then decodes fields sequentially."""

    def __init__(
        self,
        data: bytes,
        magic: bytes,
        source: str = "<memory>",
        version: int = FORMAT_VERSION,
    ) -> None:
        self.source = source
        header = len(magic) + 2
        if len(data) < header + 4:
            raise FormatError(f"{source}: file too short ({len(data)} bytes)")
        if data[: len(magic)] != magic:
            raise FormatError(f"{source}: bad magic bytes")
        (stored_crc,) = struct.unpack("<I", data[-4:])
        if zlib.crc32(data[:-4]) & 0xFFFFFFFF != stored_crc:
            raise FormatError(f"{source}: CRC32 mismatch (corrupt or truncated)")
        (found_version,) = struct.unpack("<H", data[len(magic) : header])
        if found_version != version:
            raise FormatError(
                f"{source}: unsupported format version {found_version} "
                f"(expected {version})"
            )
        self._data = memoryview(data)[:-4]
        self._pos = header

    def _take(self, size: int) -> memoryview:
        if size < 0 or self._pos + size > len(self._data):
            raise FormatError(f"{self.source}: truncated body")
        chunk = self._data[self._pos : self._pos + size]
        self._pos += size
        return chunk

    def u8(self) -> int:
        return int(struct.unpack("<B", self._take(1))[0])

    def u16(self) -> int:
        return int(struct.unpack("<H", self._take(2))[0])

    def u32(self) -> int:
        return int(struct.unpack("<I", self._take(4))[0])

    def u64(self) -> int:
        return int(struct.unpack("<Q", self._take(8))[0])

    def f32_array(self, count: int) -> NDArray[np.float64]:
        """Read ``count`` float32 values, widened to float64."""
        raw = np.frombuffer(self._take(4 * count), dtype=_F32)
        return raw.astype(np.float64)

    def u32_array(self, count: int) -> NDArray[np.int64]:
        raw = np.frombuffer(self._take(4 * count), dtype=_U32)
        return raw.astype(np.int64)

    def expect_end(self) -> None:
        if self._pos != len(self._data):
            raise FormatError(
                f"{self.source}: {len(self._data) - self._pos} "
                "unexpected trailing bytes"
            )


def atomic_write_bytes(path: str | Path, data: bytes) -> None:
    """Write ``data`` to ``path`` via a temp file in the same directory and rename."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{target.name}.", dir=target.parent)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp_name, target)
    except BaseException:
        Path(tmp_name).unlink(missing_ok=True)
        raise


def atomic_write_text(path: str | Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def read_bytes(path: str | Path) -> bytes:
    """Read a whole artifact, turning a missing file into a FormatError."""
    try:
        return Path(path).read_bytes()
    except FileNotFoundError as e:
        raise FormatError(f"{path}: file not found") from e


def canonical_json(document: Any) -> str:
    """Serialize deterministically: sorted keys, two-space indent, repr floats."""
    return json.dumps(document, sort_keys=True, indent=2, allow_nan=False) + "\n"


def sidecar_path(path: str | Path) -> Path:
    target = Path(path)
    return target.with_name(target.name + SIDECAR_SUFFIX)


def write_sidecar(path: str | Path, metadata: dict[str, Any]) -> Path:
    """Write the JSON metadata sidecar next to a binary artifact."""
    meta_path = sidecar_path(path)
    atomic_write_text(meta_path, canonical_json(metadata))
    return meta_path


def read_sidecar(path: str | Path) -> dict[str, Any]:
    """Read a sidecar; a missing sidecar yields an empty mapping."""
    meta_path = sidecar_path(path)
    if not meta_path.exists():
        return {}
    try:
        document = json.loads(meta_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise FormatError(f"{meta_path}: invalid JSON ({e})") from e
    if not isinstance(document, dict):
        raise FormatError(f"{meta_path}: sidecar must hold a JSON object")
    return document
