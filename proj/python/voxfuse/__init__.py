# Copyright 2026 The voxfuse Authors
# SPDX-License-Identifier: Apache-2.0
"""Cross-modal fusion of an acoustic model and a decoder-only language model."""

from ._voxfuse import (
    DomainError,
    EncodingError,
    IoError,
    Model,
    NumericError,
    OutOfRangeError,
    ShapeError,
    UsageError,
    build_mask,
    cross_modal_fuse,
    detokenize,
    generate_corpus,
    load_corpus,
    proportional_alignment,
    rcca,
    render_mask,
    synthesize_corpus,
    tokenize,
    train,
    wer,
)

__version__ = "0.1.0"

__all__ = [
    "DomainError",
    "EncodingError",
    "IoError",
    "Model",
    "NumericError",
    "OutOfRangeError",
    "ShapeError",
    "UsageError",
    "build_mask",
    "cross_modal_fuse",
    "detokenize",
    "generate_corpus",
    "load_corpus",
    "proportional_alignment",
    "rcca",
    "render_mask",
    "synthesize_corpus",
    "tokenize",
    "train",
    "wer",
]
