"""Residual detail generators stacked on top of the draft, one per pyramid level."""

from __future__ import annotations

import time

import torch
import torch.nn as nn
import torch.nn.functional as F

from .drafting import DraftingNet, ResBlock, StyleContext, draft_forward, kaiming_init
from .errors import ConfigurationError, DimensionError
from .imagery import decompose, upsample

# channel order of the revision input; stored in bundle manifests
CONCAT_ORDER = ("residual", "draft_up")


class RevisionNet(nn.Module):
    """One downsampling conv, a ResBlock at half resolution, one upsampling stage.

    The last conv starts at zero so an untrained level passes the upsampled
    draft through unchanged.
    """

    def __init__(self):
        super().__init__()
        self.conv1a = nn.Conv2d(6, 64, 3, padding=1)
        self.conv1b = nn.Conv2d(64, 64, 3, stride=2, padding=1)
        self.res2 = ResBlock(64)
        self.conv3a = nn.Conv2d(64, 64, 3, padding=1)
        self.conv3b = nn.Conv2d(64, 3, 3, padding=1)
        kaiming_init(self)
        nn.init.zeros_(self.conv3b.weight)
        nn.init.zeros_(self.conv3b.bias)

    def forward(self, x: torch.Tensor, return_stages: bool = False):
        r1 = F.relu(self.conv1b(F.relu(self.conv1a(x))))
        r2 = self.res2(r1)
        up = F.interpolate(r2, scale_factor=2, mode="nearest")
        out = self.conv3b(F.relu(self.conv3a(up)))
        if return_stages:
            return out, {"r1": r1, "r2": r2, "r3": out}
        return out


def revise_forward(residual: torch.Tensor, draft_up: torch.Tensor, net: RevisionNet,
                   return_stages: bool = False):
    """Predict the stylized residual from a content residual and the upsampled stylization."""
    if residual.shape != draft_up.shape:
        raise DimensionError(
            f"residual {tuple(residual.shape)} and draft_up {tuple(draft_up.shape)} differ"
        )
    h, w = residual.shape[-2:]
    if h % 2 or w % 2:
        raise DimensionError(f"revision input must have even size, got {h}x{w}")
    squeeze = residual.dim() == 3
    x = torch.cat([residual, draft_up], dim=-3)
    if squeeze:
        x = x.unsqueeze(0)
    out = net(x, return_stages=return_stages)
    if return_stages:
        out, stages = out
        return (out.squeeze(0) if squeeze else out), stages
    return out.squeeze(0) if squeeze else out


class StylizationStack(nn.Module):
    """A drafting network, its style context, and zero or more revision levels."""

    def __init__(self, drafting: DraftingNet, style: StyleContext, revisions=(), base_resolution: int = 128):
        super().__init__()
        self.drafting = drafting
        self.style = style
        self.revisions = nn.ModuleList(revisions)
        self.base_resolution = base_resolution

    @property
    def levels(self) -> int:
        return len(self.revisions)

    def resolutions(self) -> list[int]:
        """Nominal training resolution of the draft and of each revision level."""
        return [self.base_resolution * 2**k for k in range(self.levels + 1)]

    def forward(self, content, levels=None, clamp=False):
        return stylize_pyramid(content, self, levels=levels, clamp=clamp)


def stylize_pyramid(content: torch.Tensor, stack: StylizationStack, levels: int | None = None,
                    clamp: bool = True, return_levels: bool = False, timings: dict | None = None):
    """Draft on the pyramid base, then revise and aggregate level by level.

    ``levels`` defaults to every revision level in the stack.  With
    ``return_levels`` the unclamped per-level outputs, the upsampled inputs and
    the emitted residuals are returned as well.  ``timings``, if given, is
    filled with wall-clock seconds per stage.
    """
    clock = time.perf_counter
    if levels is None:
        levels = stack.levels
    if not 0 <= levels <= stack.levels:
        raise ConfigurationError(
            f"requested {levels} revision level(s); stack has {stack.levels}"
        )
    h, w = content.shape[-2:]
    div = 2**levels * 16
    if h % div or w % div:
        raise ConfigurationError(
            f"{h}x{w} content does not fit a {levels}-level stack (needs multiples of {div})"
        )
    t0 = clock()
    pyr = decompose(content, levels + 1)
    t1 = clock()
    out = draft_forward(pyr.base, stack.style, stack.drafting)
    t2 = clock()
    if timings is not None:
        timings["pyramid"] = t1 - t0
        timings["draft"] = t2 - t1
    trace = {"outputs": [out], "upsampled": [], "residuals": []}
    for k in range(levels):
        t0 = clock()
        up = upsample(out)
        r = revise_forward(pyr.residuals[k], up, stack.revisions[k])
        out = up + r
        if timings is not None:
            timings[f"revision-{k + 1}"] = clock() - t0
        trace["upsampled"].append(up)
        trace["residuals"].append(r)
        trace["outputs"].append(out)
    final = out.clamp(0.0, 1.0) if clamp else out
    return (final, trace) if return_levels else final
