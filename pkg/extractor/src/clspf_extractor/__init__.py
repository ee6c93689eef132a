"""Patch-feature extractor: ViT backbones in, CLSPF v1 files out."""

from .backbones import DEFAULT_MODEL, ModelLoadFailure, load_backbone, patch_tokens
from .extract import extract_file, extract_image, preprocess
from .writer import PATCH, ExtractionError, resized_dims, write_clspf

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_MODEL",
    "ExtractionError",
    "ModelLoadFailure",
    "PATCH",
    "extract_file",
    "extract_image",
    "load_backbone",
    "patch_tokens",
    "preprocess",
    "resized_dims",
    "write_clspf",
]
