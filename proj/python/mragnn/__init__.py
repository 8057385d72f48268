"""Two-level graph neural network fingerprint embeddings."""

from ._core import (
    RuntimeFailure,
    ValidationError,
    embed,
    eer,
    evaluate,
    generate_dataset,
    gradcheck,
    run_cli,
    similarity,
    tar_at_far,
    train,
)

__all__ = [
    "RuntimeFailure",
    "ValidationError",
    "embed",
    "eer",
    "evaluate",
    "generate_dataset",
    "gradcheck",
    "run_cli",
    "similarity",
    "tar_at_far",
    "train",
]
