"""
Binary artifact containers and dataset files.
"""

from grad_subspace_ood.storage.container import (
    ContainerReader,
    ContainerWriter,
    atomic_write_bytes,
    atomic_write_text,
    canonical_json,
    read_bytes,
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

__all__ = [
    "ContainerReader",
    "ContainerWriter",
    "atomic_write_bytes",
    "atomic_write_text",
    "canonical_json",
    "decode_dataset",
    "encode_dataset",
    "export_csv",
    "import_csv",
    "load_dataset",
    "load_scores",
    "read_bytes",
    "read_sidecar",
    "save_dataset",
    "save_matrix",
    "sidecar_path",
    "write_sidecar",
]
