"""Multi-block memory self-distillation: Python bindings to the C++ core."""

from ._massl import (
    MasslError,
    Memory,
    compare_labelings,
    embed,
    evaluate,
    export_embeddings,
    full_scale_config,
    knn_predict,
    load_config,
    make_blobs,
    massl_loss,
    sample_blocks,
    train,
)

__all__ = [
    "MasslError",
    "Memory",
    "compare_labelings",
    "embed",
    "evaluate",
    "export_embeddings",
    "full_scale_config",
    "knn_predict",
    "load_config",
    "make_blobs",
    "massl_loss",
    "sample_blocks",
    "train",
]
