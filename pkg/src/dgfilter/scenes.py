"""Procedural sharp test scenes: smooth backgrounds with hard-edged shapes.

Used as fixture sources for dataset synthesis when no photographs are at
hand; edges and fine texture give blur something to destroy.
"""
import numpy as np


def render_scene(rng, size: int = 128) -> np.ndarray:
    """Return an ``size x size x 3`` uint8 image."""
    rng = np.random.default_rng(rng)
    yy, xx = np.mgrid[0:size, 0:size] / float(size)
    c0, c1 = rng.uniform(0.1, 0.9, size=(2, 3))
    angle = rng.uniform(0, 2 * np.pi)
    t = np.clip(0.5 + (np.cos(angle) * (xx - 0.5) + np.sin(angle) * (yy - 0.5)), 0, 1)
    img = c0 * (1 - t[..., None]) + c1 * t[..., None]

    for _ in range(rng.integers(6, 12)):
        color = rng.uniform(0, 1, size=3)
        kind = rng.integers(0, 4)
        cx, cy = rng.uniform(0, 1, size=2)
        s = rng.uniform(0.05, 0.3)
        if kind == 0:
            mask = (np.abs(xx - cx) < s) & (np.abs(yy - cy) < s * rng.uniform(0.3, 1.0))
        elif kind == 1:
            mask = (xx - cx) ** 2 + (yy - cy) ** 2 < s * s
        elif kind == 2:
            th = rng.uniform(0, np.pi)
            d = np.abs(np.cos(th) * (xx - cx) + np.sin(th) * (yy - cy))
            mask = d < rng.uniform(0.005, 0.02)
        else:
            period = rng.uniform(0.03, 0.08)
            inside = (np.abs(xx - cx) < s) & (np.abs(yy - cy) < s)
            mask = inside & ((np.floor(xx / period) + np.floor(yy / period)) % 2 == 0)
        img[mask] = color
    return np.clip(np.round(img * 255), 0, 255).astype(np.uint8)
