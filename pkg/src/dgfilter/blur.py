"""Synthetic non-uniform camera-shake blur.

A shake is a 2-D random walk with momentum (translation) plus a small
in-plane rotation walk. Each grid cell sees the trajectory of its own
centre, so kernels vary smoothly over the image. The blurred image is
assembled overlap-add style: every cell's kernel is applied to the image,
weighted by a raised-cosine window, and the windows sum to one everywhere.
"""
from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
from scipy.signal import convolve2d

from . import imageio

log = logging.getLogger(__name__)

MANIFEST_VERSION = 1


class EmptyDatasetError(RuntimeError):
    """No usable source image was found for a non-empty dataset request."""


@dataclass
class Trajectory:
    points: np.ndarray  # n x 2, (x, y) in pixels
    intensity: np.ndarray  # n exposure weights

    @property
    def length(self) -> int:
        return len(self.points)


@dataclass
class BlurField:
    kernels: np.ndarray  # rows x cols x k x k

    @property
    def grid_rows(self) -> int:
        return self.kernels.shape[0]

    @property
    def grid_cols(self) -> int:
        return self.kernels.shape[1]

    @property
    def kernel_size(self) -> int:
        return self.kernels.shape[2]

    @classmethod
    def uniform(cls, kernel: np.ndarray, rows: int, cols: int) -> "BlurField":
        return cls(np.broadcast_to(np.asarray(kernel, float), (rows, cols) + kernel.shape).copy())

    @classmethod
    def delta(cls, rows: int, cols: int, k: int = 1) -> "BlurField":
        kern = np.zeros((k, k))
        kern[k // 2, k // 2] = 1.0
        return cls.uniform(kern, rows, cols)


@dataclass
class BlurConfig:
    grid_rows: int = 3
    grid_cols: int = 3
    kernel_size: int = 17
    num_points: int = 48
    max_step: float = 0.6  # median smear ~14 px at k=17
    anxiety: float = 0.15
    rotation: float = 0.004  # std of per-step rotation increments, radians
    noise_sigma: float = 0.01
    augment: bool = True

    def to_dict(self):
        return asdict(self)


def sample_trajectory(rng_seed, num_points: int, max_step: float, anxiety: float,
                      initial_velocity: Optional[Sequence[float]] = None) -> Trajectory:
    """Random walk with momentum starting at the origin.

    The velocity receives Gaussian impulses scaled by ``anxiety * max_step``
    and is clipped to ``max_step`` per step.
    """
    if num_points < 1:
        raise ValueError("num_points must be >= 1")
    rng = np.random.default_rng(rng_seed)
    if initial_velocity is None:
        theta = rng.uniform(0, 2 * np.pi)
        v = max_step * np.array([np.cos(theta), np.sin(theta)])
    else:
        v = np.asarray(initial_velocity, dtype=float)
    pts = np.zeros((num_points, 2))
    for t in range(1, num_points):
        v = v + anxiety * max_step * rng.standard_normal(2)
        speed = np.hypot(*v)
        if speed > max_step > 0:
            v *= max_step / speed
        pts[t] = pts[t - 1] + v
    return Trajectory(pts, np.ones(num_points))


def rasterize_kernel(traj: Trajectory, k: int) -> np.ndarray:
    """Bilinearly splat the centroid-centred trajectory into a ``k x k`` kernel summing to 1."""
    if k < 1 or k % 2 == 0:
        raise ValueError(f"kernel size must be odd, got {k}")
    w = np.asarray(traj.intensity, dtype=float)
    pts = np.asarray(traj.points, dtype=float)
    pts = pts - (w[:, None] * pts).sum(axis=0) / w.sum()
    r = k // 2
    extent = np.abs(pts).max()
    if extent > r:
        need = 2 * int(np.ceil(extent)) + 1
        raise ValueError(f"trajectory spans {extent:.2f} px from its centroid; kernel size {k} "
                         f"is too small, need at least {need}")
    kern = np.zeros((k, k))
    x0 = np.floor(pts[:, 0]).astype(int)
    y0 = np.floor(pts[:, 1]).astype(int)
    fx = pts[:, 0] - x0
    fy = pts[:, 1] - y0
    for dx, dy, wt in ((0, 0, (1 - fx) * (1 - fy)), (1, 0, fx * (1 - fy)),
                       (0, 1, (1 - fx) * fy), (1, 1, fx * fy)):
        m = wt > 0
        np.add.at(kern, (y0[m] + dy + r, x0[m] + dx + r), (w * wt)[m])
    return kern / kern.sum()


def sample_blur_field(rng_seed, image_size: Sequence[int], config: Optional[BlurConfig] = None) -> BlurField:
    """Draw one shake and derive a smoothly varying kernel per grid cell.

    The cell trajectory is the shake translation plus the displacement the
    rotation walk induces at the cell centre. All cells are scaled by a
    common factor when needed so every kernel fits the window.
    """
    cfg = config or BlurConfig()
    rng = np.random.default_rng(rng_seed)
    H, W = image_size
    step = cfg.max_step * rng.uniform(0.5, 1.0)
    base = sample_trajectory(rng, cfg.num_points, step, cfg.anxiety)
    angles = np.cumsum(np.concatenate([[0.0], cfg.rotation * rng.standard_normal(cfg.num_points - 1)]))
    cos, sin = np.cos(angles), np.sin(angles)
    th, tw = _tile_size(H, cfg.grid_rows), _tile_size(W, cfg.grid_cols)

    trajs = []
    for i in range(cfg.grid_rows):
        cy = i * th / 2 + th / 2 - H / 2
        for j in range(cfg.grid_cols):
            cx = j * tw / 2 + tw / 2 - W / 2
            dx = (cos - 1) * cx - sin * cy
            dy = sin * cx + (cos - 1) * cy
            pts = base.points + np.stack([dx, dy], axis=1)
            trajs.append(pts - pts.mean(axis=0))
    r = cfg.kernel_size // 2
    extent = max(np.abs(p).max() for p in trajs)
    scale = min(1.0, (r - 1e-9) / extent) if extent > 0 else 1.0

    kernels = np.empty((cfg.grid_rows, cfg.grid_cols, cfg.kernel_size, cfg.kernel_size))
    for n, pts in enumerate(trajs):
        kernels.flat[n * cfg.kernel_size ** 2:(n + 1) * cfg.kernel_size ** 2] = rasterize_kernel(
            Trajectory(pts * scale, base.intensity), cfg.kernel_size).ravel()
    return BlurField(kernels)


def _tile_size(n: int, cells: int) -> int:
    if cells < 1:
        raise ValueError("grid must have at least one cell per axis")
    if cells == 1:
        return n
    if (2 * n) % (cells + 1) or ((2 * n) // (cells + 1)) % 2:
        raise ValueError(f"size {n} cannot be split into {cells} half-overlapping tiles of even size")
    return 2 * n // (cells + 1)


def blend_windows(n: int, cells: int) -> List[np.ndarray]:
    """1-D raised-cosine windows, one per tile, summing to one at every pixel."""
    t = _tile_size(n, cells)
    if cells == 1:
        return [np.ones(n)]
    hop = t // 2
    rise = np.sin(np.pi * np.arange(hop) / t) ** 2
    fall = 1.0 - rise
    wins = []
    for i in range(cells):
        w = np.concatenate([np.ones(hop) if i == 0 else rise, np.ones(hop) if i == cells - 1 else fall])
        wins.append(w)
    return wins


def tile_slices(n: int, cells: int) -> List[slice]:
    t = _tile_size(n, cells)
    hop = max(t // 2, 1)
    return [slice(i * hop, i * hop + t) for i in range(cells)]


def apply_nonuniform_blur(sharp, field: BlurField, noise_sigma: float = 0.0, rng_seed=None) -> np.ndarray:
    """Blur a ``C x H x W`` image with a spatially varying kernel field.

    Each cell's kernel is applied over its tile (drawing context from the
    neighbouring image, reflection-padded at the image border), multiplied
    by the tile's window and accumulated. Gaussian noise is added and the
    result clamped to [-1, 1].
    """
    img = np.asarray(getattr(sharp, "data", sharp), dtype=np.float64)
    if img.ndim != 3:
        raise ValueError(f"expected C x H x W image, got shape {img.shape}")
    C, H, W = img.shape
    k = field.kernel_size
    r = k // 2
    if r >= min(H, W):
        raise ValueError(f"kernel size {k} is too large for a {H}x{W} image")
    rows, cols = tile_slices(H, field.grid_rows), tile_slices(W, field.grid_cols)
    wr, wc = blend_windows(H, field.grid_rows), blend_windows(W, field.grid_cols)
    padded = np.pad(img, ((0, 0), (r, r), (r, r)), mode="reflect")
    out = np.zeros_like(img)
    for i, rs in enumerate(rows):
        for j, cs in enumerate(cols):
            kern = field.kernels[i, j]
            region = padded[:, rs.start:rs.stop + 2 * r, cs.start:cs.stop + 2 * r]
            window = np.outer(wr[i], wc[j])
            for c in range(C):
                out[c, rs, cs] += window * convolve2d(region[c], kern, mode="valid")
    if noise_sigma > 0:
        out += noise_sigma * np.random.default_rng(rng_seed).standard_normal(out.shape)
    return np.clip(out, -1.0, 1.0).astype(np.float32)


# -- dataset ---------------------------------------------------------------

@dataclass
class ImagePair:
    blurred: np.ndarray  # 3 x H x W in [-1, 1]
    sharp: np.ndarray
    field_seed: int = 0
    id: str = ""


def _augment(crop: np.ndarray, rng) -> np.ndarray:
    if rng.random() < 0.5:
        crop = crop[:, ::-1]
    if rng.random() < 0.5:
        crop = crop[::-1]
    return np.ascontiguousarray(np.rot90(crop, int(rng.integers(0, 4))))


def _load_sources(sharp_dir, size):
    sources, skipped = [], 0
    for path in imageio.list_images(sharp_dir):
        try:
            rgb = imageio.read_rgb(path)
        except Exception as exc:
            log.warning("skipping unreadable image %s: %s", path, exc)
            skipped += 1
            continue
        if min(rgb.shape[:2]) < size:
            log.warning("skipping %s: smaller than %d px", path, size)
            skipped += 1
            continue
        sources.append(rgb)
    return sources, skipped


def synthesize_pair(source: np.ndarray, index: int, size: int, config: BlurConfig, seed: int) -> ImagePair:
    rng = np.random.default_rng([seed, index])
    y = int(rng.integers(0, source.shape[0] - size + 1))
    x = int(rng.integers(0, source.shape[1] - size + 1))
    crop = source[y:y + size, x:x + size]
    if config.augment:
        crop = _augment(crop, rng)
    field_seed = int(rng.integers(0, 2 ** 31 - 1))
    sharp = imageio.bytes_to_unit(crop)
    field = sample_blur_field(field_seed, (size, size), config)
    blurred = apply_nonuniform_blur(sharp, field, config.noise_sigma, rng_seed=[field_seed, 1])
    return ImagePair(imageio.quantize(blurred), sharp, field_seed, f"{index:06d}")


def make_dataset(sharp_dir, out_dir, count: int, size: int, config: Optional[BlurConfig] = None,
                 rng_seed: int = 0, workers: Optional[int] = None) -> dict:
    """Write ``count`` blurred/sharp PNG pairs plus ``manifest.json``; return the manifest.

    Pair ``i`` depends only on ``(rng_seed, i)``, so any worker count gives
    identical output.
    """
    cfg = config or BlurConfig()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    if count > 0:
        sources, skipped = _load_sources(sharp_dir, size)
        if skipped:
            log.warning("skipped %d unusable source image(s)", skipped)
        if not sources:
            raise EmptyDatasetError(f"no readable source image of at least {size} px in {sharp_dir}")

        def job(i):
            src = sources[int(np.random.default_rng([rng_seed, i, 7]).integers(0, len(sources)))]
            pair = synthesize_pair(src, i, size, cfg, rng_seed)
            blur_file, sharp_file = f"{pair.id}_blur.png", f"{pair.id}_sharp.png"
            imageio.write_png(out / blur_file, imageio.unit_to_bytes(pair.blurred))
            imageio.write_png(out / sharp_file, imageio.unit_to_bytes(pair.sharp))
            return {"id": pair.id, "blur_file": blur_file, "sharp_file": sharp_file,
                    "field_seed": pair.field_seed}

        n_workers = workers or thread_count()
        if n_workers > 1:
            with ThreadPoolExecutor(n_workers) as pool:
                entries = list(pool.map(job, range(count)))
        else:
            entries = [job(i) for i in range(count)]
    manifest = {"version": MANIFEST_VERSION, "seed": rng_seed, "count": count, "size": size,
                "blur": cfg.to_dict(), "entries": entries}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def load_dataset(data_dir):
    """Read a dataset directory into ``(blurred, sharp)`` float32 arrays ``N x 3 x S x S``."""
    data_dir = Path(data_dir)
    manifest = json.loads((data_dir / "manifest.json").read_text())
    if manifest.get("version") != MANIFEST_VERSION:
        raise ValueError(f"unsupported dataset manifest version {manifest.get('version')}")
    blurred = [imageio.bytes_to_unit(imageio.read_rgb(data_dir / e["blur_file"])) for e in manifest["entries"]]
    sharp = [imageio.bytes_to_unit(imageio.read_rgb(data_dir / e["sharp_file"])) for e in manifest["entries"]]
    if not blurred:
        return manifest, np.zeros((0, 3, 0, 0), np.float32), np.zeros((0, 3, 0, 0), np.float32)
    return manifest, np.stack(blurred), np.stack(sharp)


def thread_count() -> int:
    """Worker cap from ``DGF_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("DGF_THREADS", "1")))
    except ValueError:
        return 1
