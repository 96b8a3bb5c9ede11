"""Procedural images for smoke runs, demos and tests (no external datasets needed)."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image as PILImage


def synthetic_image(height: int, width: int, seed: int) -> np.ndarray:
    """A random mix of gradients, stripes, discs and noise as an ``(H, W, 3)`` uint8 array."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    yy /= height
    xx /= width
    img = np.zeros((height, width, 3))
    for c in range(3):
        a, b = rng.uniform(-1, 1, 2)
        img[..., c] = 0.5 + 0.3 * (a * xx + b * yy)
    freq = rng.uniform(4, 20)
    angle = rng.uniform(0, np.pi)
    stripes = np.sin(2 * np.pi * freq * (np.cos(angle) * xx + np.sin(angle) * yy))
    img += 0.15 * stripes[..., None] * rng.uniform(-1, 1, 3)
    for _ in range(rng.integers(2, 6)):
        cy, cx, r = rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0.05, 0.3)
        mask = (yy - cy) ** 2 + (xx - cx) ** 2 < r**2
        img[mask] = rng.uniform(0, 1, 3)
    img += rng.normal(0, 0.03, img.shape)
    return (np.clip(img, 0, 1) * 255).round().astype(np.uint8)


def synthetic_style(size: int = 256, seed: int = 1234) -> np.ndarray:
    """Swirling high-contrast pattern used as a stand-in style image."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) / size - 0.5
    r = np.hypot(yy, xx)
    theta = np.arctan2(yy, xx)
    swirl = np.sin(12 * r * 2 * np.pi + 3 * theta)
    img = np.stack([
        0.5 + 0.45 * swirl,
        0.4 + 0.35 * np.cos(8 * np.pi * xx + swirl),
        0.6 - 0.4 * swirl * np.cos(6 * np.pi * yy),
    ], axis=-1)
    img += rng.normal(0, 0.02, img.shape)
    return (np.clip(img, 0, 1) * 255).round().astype(np.uint8)


def write_corpus(directory, count: int = 10, seed: int = 0, sizes=((192, 256), (256, 192), (224, 224))) -> list[Path]:
    """Write ``count`` PNG content images of varying sizes into ``directory``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(count):
        h, w = sizes[i % len(sizes)]
        p = d / f"content_{i:03d}.png"
        PILImage.fromarray(synthetic_image(h, w, seed + i)).save(p)
        paths.append(p)
    return paths


def write_style(path, size: int = 256, seed: int = 1234) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    PILImage.fromarray(synthetic_style(size, seed)).save(p)
    return p
