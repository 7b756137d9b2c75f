"""Procedural images for desk-scale runs and tests when no photo corpus is at hand."""
from __future__ import annotations

import numpy as np


def content_image(rng: np.random.Generator, size: int = 128) -> np.ndarray:
    """A smooth background with a few filled shapes; ``size x size x 3`` float32 in [0, 1]."""
    yy, xx = np.mgrid[0:size, 0:size] / size
    base = rng.uniform(0.2, 0.8, 3)
    tilt = rng.uniform(-0.4, 0.4, (2, 3))
    img = base + xx[..., None] * tilt[0] + yy[..., None] * tilt[1]
    for _ in range(rng.integers(3, 7)):
        color = rng.uniform(0, 1, 3)
        cx, cy = rng.uniform(0.1, 0.9, 2)
        r = rng.uniform(0.05, 0.25)
        if rng.random() < 0.5:
            mask = (xx - cx) ** 2 + (yy - cy) ** 2 < r * r
        else:
            mask = (np.abs(xx - cx) < r) & (np.abs(yy - cy) < r * rng.uniform(0.3, 1.0))
        img[mask] = color
    img += rng.normal(0, 0.02, img.shape)
    return np.clip(img, 0, 1).astype(np.float32)


def style_image(kind: str = "swirl", size: int = 128, seed: int = 0) -> np.ndarray:
    """Strongly textured pattern: ``"swirl"`` (curved strokes) or ``"mosaic"`` (tiles)."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size] / size
    if kind == "swirl":
        r = np.hypot(xx - 0.5, yy - 0.5)
        th = np.arctan2(yy - 0.5, xx - 0.5)
        f = np.sin(24 * r + 5 * th) + 0.5 * np.sin(40 * xx + 13 * np.sin(9 * yy))
        palette = np.array([[0.05, 0.1, 0.35], [0.2, 0.45, 0.8], [0.95, 0.85, 0.3]])
    elif kind == "mosaic":
        cells = 12
        gx, gy = (xx * cells).astype(int), (yy * cells).astype(int)
        jitter = rng.uniform(-1, 1, (cells + 1, cells + 1))
        f = jitter[gy, gx] + 0.6 * np.sign(np.sin(2 * np.pi * cells * xx) * np.sin(2 * np.pi * cells * yy))
        palette = np.array([[0.6, 0.1, 0.1], [0.95, 0.95, 0.9], [0.1, 0.5, 0.3]])
    else:
        raise ValueError(f"unknown style kind {kind!r}")
    t = (f - f.min()) / (f.max() - f.min() + 1e-12)
    idx = t * (len(palette) - 1)
    lo = np.floor(idx).astype(int).clip(0, len(palette) - 2)
    w = (idx - lo)[..., None]
    img = palette[lo] * (1 - w) + palette[lo + 1] * w
    img += rng.normal(0, 0.03, img.shape)
    return np.clip(img, 0, 1).astype(np.float32)


def content_set(n: int, size: int = 128, seed: int = 0) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    return [content_image(rng, size) for _ in range(n)]
