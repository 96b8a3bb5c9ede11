"""Frozen VGG-19 style feature extractor and per-channel statistics."""

from __future__ import annotations

from typing import NamedTuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from .archive import read_archive, write_archive
from .errors import DimensionError, IntegrityError, LoadError

# VGG-19 convolution trunk up to conv5_1: (name, in_channels, out_channels).
# A 2x2 max-pool precedes every block after the first.
CONV_LAYERS = [
    ("1_1", 3, 64), ("1_2", 64, 64),
    ("2_1", 64, 128), ("2_2", 128, 128),
    ("3_1", 128, 256), ("3_2", 256, 256), ("3_3", 256, 256), ("3_4", 256, 256),
    ("4_1", 256, 512), ("4_2", 512, 512), ("4_3", 512, 512), ("4_4", 512, 512),
    ("5_1", 512, 512),
]
TAPS = ("1_1", "1_2", "2_1", "2_2", "3_1", "3_2", "4_1", "5_1")
TAP_CHANNELS = {name: cout for name, _, cout in CONV_LAYERS if name in TAPS}

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

STD_EPS = 1e-5

# Index of each conv in torchvision's ``vgg19().features``.
_TORCHVISION_INDEX = {
    "1_1": 0, "1_2": 2, "2_1": 5, "2_2": 7,
    "3_1": 10, "3_2": 12, "3_3": 14, "3_4": 16,
    "4_1": 19, "4_2": 21, "4_3": 23, "4_4": 25, "5_1": 28,
}


class ChannelStats(NamedTuple):
    mean: torch.Tensor
    std: torch.Tensor


def _depth(tag: str) -> int:
    return int(tag.split("_")[0])


def channel_stats(f: torch.Tensor, eps: float = STD_EPS) -> ChannelStats:
    """Spatial mean and ``sqrt(population variance + eps)`` per channel.

    ``f`` is ``(..., C, H, W)``; both outputs are ``(..., C)``.
    """
    if f.dim() < 3:
        raise DimensionError(f"feature map needs (..., C, H, W), got shape {tuple(f.shape)}")
    if f.shape[-1] * f.shape[-2] < 1:
        raise DimensionError("feature map has no spatial positions")
    flat = f.flatten(-2)
    mean = flat.mean(-1)
    var = flat.var(-1, unbiased=False)
    return ChannelStats(mean, torch.sqrt(var + eps))


class Extractor(nn.Module):
    """Fixed convolutional encoder exposing ReLU outputs at the tap layers.

    Inputs are RGB images in [0, 1]; ImageNet normalisation is applied
    internally.  All parameters are frozen at construction.
    """

    def __init__(self, state: dict[str, torch.Tensor] | None = None):
        super().__init__()
        self.convs = nn.ModuleDict(
            {name: nn.Conv2d(cin, cout, 3, padding=1) for name, cin, cout in CONV_LAYERS}
        )
        self.register_buffer("mean", torch.tensor(IMAGENET_MEAN).view(1, 3, 1, 1), persistent=False)
        self.register_buffer("std", torch.tensor(IMAGENET_STD).view(1, 3, 1, 1), persistent=False)
        if state is not None:
            self.load_weights(state)
        self.requires_grad_(False)
        self.eval()

    def train(self, mode: bool = True):
        # never leaves eval mode
        return super().train(False)

    def load_weights(self, state: dict[str, torch.Tensor]) -> None:
        validate_weights(state)
        with torch.no_grad():
            for name, conv in self.convs.items():
                conv.weight.copy_(state[f"conv{name}.weight"])
                conv.bias.copy_(state[f"conv{name}.bias"])

    def weights(self) -> dict[str, torch.Tensor]:
        """Archive-layout copy of the parameters (``conv<tag>.weight`` / ``.bias``)."""
        out = {}
        for name, conv in self.convs.items():
            out[f"conv{name}.weight"] = conv.weight.detach().clone()
            out[f"conv{name}.bias"] = conv.bias.detach().clone()
        return out

    def forward(self, x: torch.Tensor, layers=TAPS) -> dict[str, torch.Tensor]:
        return extract(self, x, layers)


def extract(extractor: Extractor, x: torch.Tensor, layers=TAPS) -> dict[str, torch.Tensor]:
    """Run ``x`` (``(B, 3, H, W)`` or ``(3, H, W)``) and return the requested taps.

    Only the trunk up to the deepest requested tap is evaluated.
    """
    layers = set(layers)
    unknown = layers - set(TAPS)
    if unknown:
        raise ValueError(f"unknown tap(s) {sorted(unknown)}; available: {TAPS}")
    if not layers:
        return {}
    squeeze = x.dim() == 3
    if squeeze:
        x = x.unsqueeze(0)
    deepest = max(_depth(t) for t in layers)
    div = 2 ** (deepest - 1)
    h, w = x.shape[-2:]
    if h % div or w % div:
        raise DimensionError(f"{h}x{w} input is not divisible by {div} (needed for tap depth {deepest})")

    out = {}
    h = (x - extractor.mean.to(x.dtype)) / extractor.std.to(x.dtype)
    block = 1
    for name, conv in extractor.convs.items():
        d = _depth(name)
        if d > deepest:
            break
        if d != block:
            h = F.max_pool2d(h, 2)
            block = d
        h = F.relu(conv(h))
        if name in layers:
            out[name] = h.squeeze(0) if squeeze else h
    return out


def validate_weights(state: dict[str, torch.Tensor]) -> None:
    """Raise LoadError naming the first layer whose tensors are absent or misshapen."""
    for name, cin, cout in CONV_LAYERS:
        expected = {
            f"conv{name}.weight": (cout, cin, 3, 3),
            f"conv{name}.bias": (cout,),
        }
        for key, shape in expected.items():
            if key not in state:
                raise LoadError(f"layer {name}: missing tensor {key!r}")
            t = state[key]
            if tuple(t.shape) != shape:
                raise LoadError(
                    f"layer {name}: shape mismatch for {key!r}, expected {shape}, got {tuple(t.shape)}"
                )
            if not torch.isfinite(t).all():
                raise LoadError(f"layer {name}: non-finite values in {key!r}")


def random_weights(seed: int = 0) -> dict[str, torch.Tensor]:
    """Kaiming-initialised weights in archive layout; a stand-in when no pretrained file exists."""
    g = torch.Generator().manual_seed(seed)
    state = {}
    for name, cin, cout in CONV_LAYERS:
        std = (2.0 / (cin * 9)) ** 0.5
        state[f"conv{name}.weight"] = torch.randn(cout, cin, 3, 3, generator=g) * std
        state[f"conv{name}.bias"] = torch.zeros(cout)
    return state


def from_torchvision_vgg19(state_dict: dict[str, torch.Tensor]) -> dict[str, torch.Tensor]:
    """Map a torchvision ``vgg19`` (or ``vgg19().features``) state dict onto archive names."""
    prefix = "features." if any(k.startswith("features.") for k in state_dict) else ""
    out = {}
    for name, idx in _TORCHVISION_INDEX.items():
        for kind in ("weight", "bias"):
            key = f"{prefix}{idx}.{kind}"
            if key not in state_dict:
                raise LoadError(f"layer {name}: torchvision key {key!r} not found")
            out[f"conv{name}.{kind}"] = state_dict[key].detach().float().clone()
    return out


def save_extractor_weights(state: dict[str, torch.Tensor], path) -> None:
    validate_weights(state)
    layers = {name: {"weight": [cout, cin, 3, 3], "bias": [cout]} for name, cin, cout in CONV_LAYERS}
    write_archive(path, state, {"kind": "extractor", "architecture": "vgg19-to-conv5_1", "layers": layers})


def load_extractor(path) -> Extractor:
    try:
        state, _ = read_archive(path)
    except IntegrityError as exc:
        raise LoadError(str(exc)) from exc
    return Extractor(state)
