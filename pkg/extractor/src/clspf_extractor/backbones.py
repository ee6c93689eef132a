"""Backbone loading and patch-token extraction.

The default backbone is the 21M-parameter register-token distilled ViT
(``dinov2_vits14_reg``, loaded via torch.hub, needs network or a hub cache).
Any model emitting patch tokens on a 14-pixel grid works; class and register
tokens are stripped so the payload holds exactly rows*cols vectors. Features
come from the final layer only, with no fusion across layers.

``random-vit-<dim>`` names a tiny deterministic stand-in backbone (seeded
random weights) used by the contract tests and offline smoke runs.
"""

from __future__ import annotations

import torch
from torch import nn

from .writer import PATCH, ExtractionError

HUB_REPO = "facebookresearch/dinov2"
DEFAULT_MODEL = "dinov2_vits14_reg"

# ImageNet statistics, the standard preprocessing for these backbones
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


class ModelLoadFailure(RuntimeError):
    pass


class TinyPatchBackbone(nn.Module):
    """Deterministic stand-in: patch embedding plus one token-mixing block.

    Emits a class token and four register tokens ahead of the patch tokens
    so the extraction path exercises token stripping exactly like the real
    backbone family.
    """

    num_register_tokens = 4

    def __init__(self, dim: int = 32, seed: int = 0):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        self.dim = dim
        self.embed = nn.Conv2d(3, dim, kernel_size=PATCH, stride=PATCH)
        self.mix = nn.Linear(dim, dim)
        self.norm = nn.LayerNorm(dim)
        with torch.no_grad():
            for p in self.parameters():
                p.copy_(torch.randn(p.shape, generator=gen) * 0.2)
        self.cls_token = nn.Parameter(torch.randn(1, 1, dim, generator=gen))
        self.registers = nn.Parameter(
            torch.randn(1, self.num_register_tokens, dim, generator=gen)
        )
        self.eval()

    def get_intermediate_layers(self, x, n=1, norm=True):
        b = x.shape[0]
        tokens = self.embed(x).flatten(2).transpose(1, 2)  # (B, P, D)
        tokens = tokens + torch.tanh(self.mix(tokens))
        prefix = torch.cat([self.cls_token, self.registers], dim=1).expand(b, -1, -1)
        seq = torch.cat([prefix, tokens], dim=1)
        if norm:
            seq = self.norm(seq)
        return (seq,)


def load_backbone(name: str = DEFAULT_MODEL, device: str = "cpu") -> nn.Module:
    """Load a backbone by name; ``random-vit-<dim>`` builds the local
    stand-in."""
    if name.startswith("random-vit-"):
        try:
            dim = int(name.rsplit("-", 1)[1])
        except ValueError as exc:
            raise ModelLoadFailure(f"bad stand-in name {name!r}") from exc
        return TinyPatchBackbone(dim=dim).to(device)
    try:
        model = torch.hub.load(HUB_REPO, name)
    except Exception as exc:
        raise ModelLoadFailure(
            f"cannot load {name!r} from {HUB_REPO}: {exc}"
        ) from exc
    return model.eval().to(device)


@torch.no_grad()
def patch_tokens(model: nn.Module, x: torch.Tensor) -> torch.Tensor:
    """Final-layer patch tokens (B, rows*cols, D), class/register tokens
    removed.

    Prefers the dict-returning forward_features (patch tokens already
    separated); otherwise takes the final intermediate layer and strips the
    inferred prefix tokens.
    """
    b, _, h, w = x.shape
    expected = (h // PATCH) * (w // PATCH)

    if hasattr(model, "forward_features"):
        out = model.forward_features(x)
        if isinstance(out, dict) and "x_norm_patchtokens" in out:
            tokens = out["x_norm_patchtokens"]
            if tokens.shape[1] != expected:
                raise ExtractionError(
                    f"backbone returned {tokens.shape[1]} patch tokens, "
                    f"expected {expected}"
                )
            return tokens

    if not hasattr(model, "get_intermediate_layers"):
        raise ExtractionError("backbone exposes no patch-token interface")
    seq = model.get_intermediate_layers(x, n=1, norm=True)[0]
    extra = seq.shape[1] - expected
    if extra < 0:
        raise ExtractionError(
            f"backbone returned {seq.shape[1]} tokens for {expected} patches"
        )
    return seq[:, extra:, :]
