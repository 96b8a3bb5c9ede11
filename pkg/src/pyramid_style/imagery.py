"""Image I/O and the Laplacian pyramid used by every stage of the pipeline.

Images are float tensors in channel-first layout, either ``(3, H, W)`` or
batched ``(B, 3, H, W)``, with values in ``[0, 1]``.  Residual images may be
negative and are never clamped; clamping only happens on export.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image as PILImage

from .errors import DataError, DimensionError, ParameterError

__all__ = [
    "Pyramid",
    "downsample",
    "upsample",
    "decompose",
    "aggregate",
    "load_image",
    "save_image",
    "to_uint8",
    "from_uint8",
]


@dataclass
class Pyramid:
    """Base image plus residuals ordered from coarse to fine (finest last)."""

    base: torch.Tensor
    residuals: list[torch.Tensor] = field(default_factory=list)

    @property
    def level_count(self) -> int:
        return len(self.residuals) + 1


def _as_batch(img: torch.Tensor) -> tuple[torch.Tensor, bool]:
    if img.dim() == 3:
        return img.unsqueeze(0), True
    if img.dim() == 4:
        return img, False
    raise DimensionError(f"expected a (C, H, W) or (B, C, H, W) tensor, got shape {tuple(img.shape)}")


def downsample(img: torch.Tensor) -> torch.Tensor:
    """Halve height and width with 2x2 box averaging.

    This is bilinear resampling at scale 0.5 with antialiasing, which for an
    exact factor of two reduces to the mean of each 2x2 block.
    """
    x, squeeze = _as_batch(img)
    h, w = x.shape[-2:]
    if h % 2 or w % 2:
        raise DimensionError(f"downsample needs even height and width, got {h}x{w}")
    out = F.avg_pool2d(x, kernel_size=2, stride=2)
    return out.squeeze(0) if squeeze else out


def upsample(img: torch.Tensor, factor: int = 2) -> torch.Tensor:
    """Bilinear (half-pixel centred, edge-clamped) upsampling by 2 or 4."""
    if factor not in (2, 4):
        raise ParameterError(f"upsample factor must be 2 or 4, got {factor!r}")
    x, squeeze = _as_batch(img)
    out = F.interpolate(x, scale_factor=factor, mode="bilinear", align_corners=False)
    return out.squeeze(0) if squeeze else out


def decompose(img: torch.Tensor, levels: int) -> Pyramid:
    if levels < 1:
        raise ParameterError(f"levels must be >= 1, got {levels}")
    h, w = img.shape[-2:]
    step = 2 ** (levels - 1)
    if h % step or w % step:
        raise DimensionError(f"{h}x{w} image is not divisible by {step} for a {levels}-level pyramid")
    current = img
    residuals = []
    for _ in range(levels - 1):
        coarse = downsample(current)
        residuals.append(current - upsample(coarse))
        current = coarse
    residuals.reverse()
    return Pyramid(base=current, residuals=residuals)


def aggregate(base: torch.Tensor, residuals, clamp: bool = False) -> torch.Tensor:
    """Rebuild an image from a base and its residuals: ``Up(...Up(base) + r1 ...) + rL``.

    Pass ``clamp=True`` only for display/export; training consumes the raw sum.
    """
    out = base
    for k, r in enumerate(residuals):
        if r.shape[-2:] != (out.shape[-2] * 2, out.shape[-1] * 2):
            raise DimensionError(
                f"residual {k} has size {tuple(r.shape[-2:])}, expected twice {tuple(out.shape[-2:])}"
            )
        out = upsample(out) + r
    return out.clamp(0.0, 1.0) if clamp else out


def from_uint8(arr: np.ndarray) -> torch.Tensor:
    """``(H, W, 3)`` uint8 array -> ``(3, H, W)`` float tensor in [0, 1]."""
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise DimensionError(f"expected an (H, W, 3) array, got {arr.shape}")
    return torch.from_numpy(np.array(arr, dtype=np.uint8)).permute(2, 0, 1).float() / 255.0


def to_uint8(img: torch.Tensor) -> np.ndarray:
    """``(3, H, W)`` tensor -> ``(H, W, 3)`` uint8 array, via round(255 * clamp(v))."""
    if img.dim() != 3:
        raise DimensionError(f"expected a (3, H, W) tensor, got shape {tuple(img.shape)}")
    x = img.detach().to(torch.float64).clamp(0.0, 1.0) * 255.0
    return x.round().to(torch.uint8).permute(1, 2, 0).cpu().numpy()


def load_image(path, size: int | tuple[int, int] | None = None) -> torch.Tensor:
    """Decode a PNG/JPEG file to a ``(3, H, W)`` tensor.

    ``size`` resizes (no crop) to a square side or ``(height, width)``.
    """
    try:
        with PILImage.open(Path(path)) as im:
            im = im.convert("RGB")
            if size is not None:
                h, w = (size, size) if isinstance(size, int) else size
                im = im.resize((w, h), PILImage.BICUBIC)
            arr = np.asarray(im)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot decode image {path}: {exc}") from exc
    return from_uint8(arr)


def save_image(img: torch.Tensor, path) -> None:
    PILImage.fromarray(to_uint8(img)).save(Path(path))
