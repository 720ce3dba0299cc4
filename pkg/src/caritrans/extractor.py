"""Frozen perceptual feature extractor (a VGG16 convolutional prefix)."""

from pathlib import Path

import torch
import torch.nn as nn
from torchvision.models import vgg16

from .exceptions import ExtractorUnavailable

# indices into torchvision's vgg16().features
VGG16_LAYERS = {
    "relu1_1": 1,
    "relu1_2": 3,
    "relu2_1": 6,
    "relu2_2": 8,
    "relu3_1": 11,
    "relu3_2": 13,
    "relu3_3": 15,
    "relu4_1": 18,
    "relu4_2": 20,
    "relu4_3": 22,
}

_MEAN = (0.485, 0.456, 0.406)
_STD = (0.229, 0.224, 0.225)

DOWNLOAD_HINT = (
    "save torchvision's pretrained VGG16 once with\n"
    "  python -c \"import torch, torchvision; "
    "torch.save(torchvision.models.vgg16(weights='DEFAULT').state_dict(), 'vgg16.pth')\"\n"
    "and point `extractor_weights` at the file"
)


class FeatureExtractor(nn.Module):
    """Returns ``{layer_tag: feature_map}`` for the requested layers.

    Inputs are images in [-1, 1]; they are rescaled and normalized with the
    ImageNet statistics the VGG weights expect. Parameters are frozen.
    """

    def __init__(self, layers=("relu2_2", "relu3_3")):
        super().__init__()
        unknown = set(layers) - set(VGG16_LAYERS)
        if unknown:
            raise ValueError(f"unknown extractor layers {sorted(unknown)}")
        self.layers = tuple(layers)
        depth = max(VGG16_LAYERS[name] for name in layers) + 1
        self.features = vgg16().features[:depth]
        for m in self.features:
            if isinstance(m, nn.ReLU):
                m.inplace = False
        self.register_buffer("mean", torch.tensor(_MEAN).view(1, 3, 1, 1))
        self.register_buffer("std", torch.tensor(_STD).view(1, 3, 1, 1))
        self.requires_grad_(False)
        self.eval()

    def train(self, mode=True):
        # always frozen
        return super().train(False)

    def forward(self, x):
        h = ((x + 1.0) * 0.5 - self.mean) / self.std
        wanted = {VGG16_LAYERS[name]: name for name in self.layers}
        out = {}
        for i, layer in enumerate(self.features):
            h = layer(h)
            if i in wanted:
                out[wanted[i]] = h
        return out

    def load_weights(self, path):
        path = Path(path)
        if not path.is_file():
            raise ExtractorUnavailable(f"extractor weights not found at {path}; {DOWNLOAD_HINT}")
        try:
            state = torch.load(path, map_location="cpu", weights_only=True)
        except Exception as exc:
            raise ExtractorUnavailable(f"cannot read extractor weights {path}: {exc}") from exc
        # accept a full torchvision VGG16 state dict or a bare `features` one
        if any(k.startswith("features.") for k in state):
            state = {k[len("features."):]: v for k, v in state.items() if k.startswith("features.")}
        own = self.features.state_dict()
        missing = [k for k in own if k not in state]
        if missing:
            raise ExtractorUnavailable(f"extractor weights {path} lack {missing[:3]}...")
        self.features.load_state_dict({k: state[k] for k in own})
        return self


def load_extractor(path, layers=("relu2_2", "relu3_3"), device="cpu"):
    if path is None:
        raise ExtractorUnavailable(f"no extractor weights configured; {DOWNLOAD_HINT}")
    return FeatureExtractor(layers).load_weights(path).to(device)


def save_random_extractor(path, seed=0):
    """Write seeded randomly initialised VGG16 weights (for tests and smoke runs)."""
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        torch.save(vgg16().features.state_dict(), path)
    return Path(path)
