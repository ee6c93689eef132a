"""Image -> CLSPF feature file extraction."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .backbones import IMAGENET_MEAN, IMAGENET_STD, patch_tokens
from .writer import PATCH, ExtractionError, resized_dims, write_clspf


def preprocess(image: Image.Image) -> tuple[torch.Tensor, int, int]:
    """Resize to patch-multiple dims (bilinear) and normalize.

    Returns the (1, 3, H, W) tensor plus the original dimensions. Bilinear
    interpolation is this extractor's documented resize choice; the file
    format records only the resulting geometry.
    """
    orig_w, orig_h = image.size
    res_h, res_w = resized_dims(orig_h, orig_w)
    resized = image.convert("RGB").resize((res_w, res_h), Image.BILINEAR)
    arr = np.asarray(resized, dtype=np.float32) / 255.0
    arr = (arr - np.asarray(IMAGENET_MEAN, dtype=np.float32)) / np.asarray(
        IMAGENET_STD, dtype=np.float32
    )
    tensor = torch.from_numpy(arr).permute(2, 0, 1).unsqueeze(0)
    return tensor, orig_h, orig_w


@torch.no_grad()
def extract_image(
    image: Image.Image, model: torch.nn.Module, device: str = "cpu"
) -> tuple[np.ndarray, int, int]:
    """Run the backbone on one image; returns (rows, cols, dim) float32
    features plus original dims."""
    tensor, orig_h, orig_w = preprocess(image)
    res_h, res_w = resized_dims(orig_h, orig_w)
    rows, cols = res_h // PATCH, res_w // PATCH
    tokens = patch_tokens(model, tensor.to(device))
    dim = tokens.shape[-1]
    features = tokens[0].cpu().numpy().astype(np.float32).reshape(rows, cols, dim)
    return features, orig_h, orig_w


def extract_file(
    image_path: str | Path,
    out_path: str | Path,
    model: torch.nn.Module,
    device: str = "cpu",
) -> Path:
    """Extract one image file to a .clspf file; returns the output path."""
    image_path = Path(image_path)
    try:
        with Image.open(image_path) as image:
            features, orig_h, orig_w = extract_image(image, model, device)
    except ExtractionError:
        raise
    except Exception as exc:
        raise ExtractionError(f"cannot decode {image_path}: {exc}") from exc
    out_path = Path(out_path)
    write_clspf(out_path, orig_h, orig_w, features)
    return out_path
