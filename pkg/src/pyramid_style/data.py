"""Content image stream: resize short side to 1.12x the crop size, random square crop."""

from __future__ import annotations

import logging
from functools import lru_cache
from pathlib import Path
from typing import Iterator

import numpy as np
import torch
from PIL import Image as PILImage

from .errors import DataError
from .imagery import from_uint8

log = logging.getLogger(__name__)

RESIZE_MARGIN = 1.12


def resized_shape(height: int, width: int, resolution: int) -> tuple[int, int]:
    """(height, width) after scaling the short side to ``round(resolution * 1.12)``."""
    short = round(resolution * RESIZE_MARGIN)
    scale = short / min(height, width)
    if height <= width:
        return short, max(short, round(width * scale))
    return max(short, round(height * scale)), short


@lru_cache(maxsize=256)
def _decode_resized(path: str, resolution: int) -> np.ndarray:
    with PILImage.open(path) as im:
        im = im.convert("RGB")
        h, w = resized_shape(im.height, im.width, resolution)
        im = im.resize((w, h), PILImage.BICUBIC)
        return np.asarray(im)


def list_images(content_dir) -> list[Path]:
    d = Path(content_dir)
    if not d.is_dir():
        raise DataError(f"content directory {d} does not exist")
    return sorted(p for p in d.iterdir() if p.is_file() and not p.name.startswith("."))


def iterate_content(content_dir, resolution: int, batch: int, seed: int = 0) -> Iterator[torch.Tensor]:
    """Endless stream of ``(batch, 3, resolution, resolution)`` tensors.

    Files are visited in a fresh seeded permutation each epoch; a batch may
    straddle epochs, so tiny corpora repeat images within one batch.
    Undecodable files are dropped with a warning.
    """
    if batch < 1:
        raise ValueError(f"batch must be >= 1, got {batch}")
    pool = list_images(content_dir)
    if not pool:
        raise DataError(f"no images found in {content_dir}")
    rng = np.random.default_rng(seed)
    order: list[Path] = []
    while True:
        items = []
        while len(items) < batch:
            if not order:
                if not pool:
                    raise DataError(f"no decodable images in {content_dir}")
                order = [pool[i] for i in rng.permutation(len(pool))]
            path = order.pop(0)
            try:
                arr = _decode_resized(str(path), resolution)
            except (OSError, ValueError) as exc:
                log.warning("skipping undecodable image %s: %s", path, exc)
                pool.remove(path)
                order = [p for p in order if p != path]
                continue
            top = int(rng.integers(0, arr.shape[0] - resolution + 1))
            left = int(rng.integers(0, arr.shape[1] - resolution + 1))
            items.append(from_uint8(arr[top:top + resolution, left:left + resolution]))
        yield torch.stack(items)
