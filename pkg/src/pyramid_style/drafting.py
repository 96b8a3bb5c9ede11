"""Low-resolution stylizer: frozen encoder, AdaIN at 2_1/3_1/4_1, skip-connected decoder."""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import DimensionError
from .features import ChannelStats, Extractor, channel_stats, extract

ADAIN_TAPS = ("2_1", "3_1", "4_1")


def adain(content: torch.Tensor, style_stats: ChannelStats) -> torch.Tensor:
    """Replace each channel's mean/std of ``content`` with the style statistics."""
    s_mean, s_std = style_stats
    if content.shape[-3] != s_mean.shape[-1] or s_std.shape != s_mean.shape:
        raise DimensionError(
            f"content has {content.shape[-3]} channels, style stats have {s_mean.shape[-1]}"
        )
    c_mean, c_std = channel_stats(content)
    normalized = (content - c_mean[..., None, None]) / c_std[..., None, None]
    return normalized * s_std[..., None, None] + s_mean[..., None, None]


@dataclass
class StyleContext:
    """Encoder statistics of the (fixed) style image at the AdaIN taps.

    ``features`` is kept when the context is built from an image and is empty
    when it is restored from a bundle; inference only needs ``stats``.
    """

    stats: dict[str, ChannelStats]
    features: dict[str, torch.Tensor] = field(default_factory=dict)

    def to_tensors(self) -> dict[str, torch.Tensor]:
        out = {}
        for tap, (mean, std) in self.stats.items():
            out[f"{tap}/mean"] = mean.detach().reshape(-1).clone()
            out[f"{tap}/std"] = std.detach().reshape(-1).clone()
        return out

    @classmethod
    def from_tensors(cls, tensors: dict[str, torch.Tensor]) -> "StyleContext":
        taps = sorted({k.split("/")[0] for k in tensors})
        return cls({t: ChannelStats(tensors[f"{t}/mean"], tensors[f"{t}/std"]) for t in taps})


@torch.no_grad()
def build_style_context(extractor: Extractor, style: torch.Tensor) -> StyleContext:
    feats = extract(extractor, style, ADAIN_TAPS)
    stats = {}
    for tap, f in feats.items():
        mean, std = channel_stats(f)
        # one style image: keep (C,) vectors so they broadcast over any batch
        stats[tap] = ChannelStats(mean.reshape(-1), std.reshape(-1))
    return StyleContext(stats, feats)


class ResBlock(nn.Module):
    """3x3 conv + ReLU, then 1x1 conv, plus identity."""

    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.conv2 = nn.Conv2d(channels, channels, 1)

    def forward(self, x):
        return x + self.conv2(F.relu(self.conv1(x)))


def kaiming_init(module: nn.Module) -> None:
    for m in module.modules():
        if isinstance(m, nn.Conv2d):
            nn.init.kaiming_normal_(m.weight, nonlinearity="relu")
            nn.init.zeros_(m.bias)


class DraftDecoder(nn.Module):
    def __init__(self):
        super().__init__()
        self.res4 = ResBlock(512)
        self.conv4 = nn.Conv2d(512, 256, 3, padding=1)
        self.res3 = ResBlock(256)
        self.conv3 = nn.Conv2d(256, 128, 3, padding=1)
        self.conv2a = nn.Conv2d(128, 128, 3, padding=1)
        self.conv2b = nn.Conv2d(128, 64, 3, padding=1)
        self.conv1a = nn.Conv2d(64, 64, 3, padding=1)
        self.conv1b = nn.Conv2d(64, 3, 3, padding=1)
        kaiming_init(self)

    def forward(self, mod: dict[str, torch.Tensor], return_stages: bool = False):
        stages = {}
        x = F.relu(self.conv4(self.res4(mod["4_1"])))
        stages["d4"] = x
        x = F.interpolate(x, scale_factor=2, mode="nearest") + mod["3_1"]
        x = F.relu(self.conv3(self.res3(x)))
        stages["d3"] = x
        x = F.interpolate(x, scale_factor=2, mode="nearest") + mod["2_1"]
        x = F.relu(self.conv2b(F.relu(self.conv2a(x))))
        stages["d2"] = x
        x = F.interpolate(x, scale_factor=2, mode="nearest")
        x = self.conv1b(F.relu(self.conv1a(x)))
        stages["d1"] = x
        return (x, stages) if return_stages else x


class DraftingNet(nn.Module):
    """Encoder (frozen, shared) + trainable decoder.

    Only ``decoder`` is trainable and serialised; ``encoder`` is the shared
    extractor and is stored separately.
    """

    def __init__(self, encoder: Extractor):
        super().__init__()
        self.encoder = encoder
        self.decoder = DraftDecoder()

    def forward(self, content: torch.Tensor, style: StyleContext, return_stages: bool = False):
        return draft_forward(content, style, self, return_stages=return_stages)


def draft_forward(content_lr: torch.Tensor, style_ctx: StyleContext, net: DraftingNet,
                  return_stages: bool = False):
    """Stylize a low-resolution batch ``(B, 3, H, W)`` (H, W divisible by 16)."""
    squeeze = content_lr.dim() == 3
    x = content_lr.unsqueeze(0) if squeeze else content_lr
    h, w = x.shape[-2:]
    if h % 16 or w % 16:
        raise DimensionError(f"drafting input must be divisible by 16, got {h}x{w}")
    feats = extract(net.encoder, x, ADAIN_TAPS)
    mod = {tap: adain(feats[tap], style_ctx.stats[tap]) for tap in ADAIN_TAPS}
    out, stages = net.decoder(mod, return_stages=True)
    if squeeze:
        out = out.squeeze(0)
    if return_stages:
        stages.update({f"F{tap}": f for tap, f in feats.items()})
        return out, stages
    return out
