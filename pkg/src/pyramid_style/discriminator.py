"""Shallow patch discriminator: five 3x3 stride-1 convs, 32 hidden channels."""

from __future__ import annotations

import torch
import torch.nn as nn

from .errors import DimensionError

HIDDEN = 32
DEPTH = 5


class PatchDiscriminator(nn.Module):
    def __init__(self, hidden: int = HIDDEN, depth: int = DEPTH):
        super().__init__()
        chans = [3] + [hidden] * (depth - 1) + [1]
        layers = []
        for i in range(depth):
            layers.append(nn.Conv2d(chans[i], chans[i + 1], 3, stride=1, padding=1))
            if i < depth - 1:
                layers.append(nn.LeakyReLU(0.2))
        self.body = nn.Sequential(*layers)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return disc_forward(x, self)


def receptive_field(net: nn.Module) -> int:
    """Receptive field of one output location, from the conv layers in order."""
    rf, jump = 1, 1
    for m in net.modules():
        if isinstance(m, nn.Conv2d):
            k = m.kernel_size[0]
            rf += (k - 1) * m.dilation[0] * jump
            jump *= m.stride[0]
    return rf


def disc_forward(x: torch.Tensor, net: PatchDiscriminator) -> torch.Tensor:
    """Realness score map ``(B, 1, H, W)`` for images ``(B, 3, H, W)``."""
    rf = receptive_field(net)
    h, w = x.shape[-2:]
    if h < rf or w < rf:
        raise DimensionError(f"{h}x{w} input is smaller than the {rf}px receptive field")
    squeeze = x.dim() == 3
    out = net.body(x.unsqueeze(0) if squeeze else x)
    return out.squeeze(0) if squeeze else out
