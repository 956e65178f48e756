"""Full-reference image quality metrics: PSNR, SSIM, MS-SSIM and UIQI.

Metrics operate on 2-D arrays. RGB inputs (``H x W x 3``) are converted to
Rec.601 luma first; evaluation of network outputs happens on the 8-bit
luma domain (see :func:`evaluate_pair`).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

INFINITE = math.inf
MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
METRICS = ("psnr", "ssim", "ms_ssim", "uiqi")


def to_luma(img) -> np.ndarray:
    a = np.asarray(img, dtype=np.float64)
    if a.ndim == 3 and a.shape[-1] == 3:
        return 0.299 * a[..., 0] + 0.587 * a[..., 1] + 0.114 * a[..., 2]
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D image or H x W x 3 RGB, got shape {a.shape}")
    return a


def _pair(a, b):
    a, b = to_luma(a), to_luma(b)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b, peak: float = 255.0) -> float:
    """Peak signal-to-noise ratio in dB; ``math.inf`` for identical inputs."""
    if peak <= 0:
        raise ValueError("peak must be positive")
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    mse = np.mean((a - b) ** 2)
    if mse == 0:
        return INFINITE
    return float(10.0 * np.log10(peak * peak / mse))


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x * x) / (2 * sigma * sigma))
    return g / g.sum()


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Separable 'valid' correlation with the 1-D window ``g``."""
    n = len(g)
    rows = sliding_window_view(img, n, axis=0) @ g
    return sliding_window_view(rows, n, axis=1) @ g


def _ssim_maps(a, b, g, c1, c2):
    mu_a, mu_b = _filter_valid(a, g), _filter_valid(b, g)
    saa = _filter_valid(a * a, g) - mu_a * mu_a
    sbb = _filter_valid(b * b, g) - mu_b * mu_b
    sab = _filter_valid(a * b, g) - mu_a * mu_b
    lum = (2 * mu_a * mu_b + c1) / (mu_a * mu_a + mu_b * mu_b + c1)
    cs = (2 * sab + c2) / (saa + sbb + c2)
    return lum, cs


def ssim(a, b, window: int = 11, k1: float = 0.01, k2: float = 0.03, peak: float = 255.0,
         sigma: float = 1.5) -> float:
    """Mean structural similarity over all valid Gaussian windows."""
    a, b = _pair(a, b)
    if min(a.shape) < window:
        raise ValueError(f"image {a.shape} is smaller than the {window}x{window} window")
    lum, cs = _ssim_maps(a, b, gaussian_window(window, sigma), (k1 * peak) ** 2, (k2 * peak) ** 2)
    return float(np.mean(lum * cs))


def _downsample(img):
    h, w = (img.shape[0] // 2) * 2, (img.shape[1] // 2) * 2
    x = img[:h, :w]
    return 0.25 * (x[0::2, 0::2] + x[1::2, 0::2] + x[0::2, 1::2] + x[1::2, 1::2])


def ms_ssim_levels(shape, window: int = 11, max_levels: int = 5) -> int:
    side = min(shape)
    levels = 0
    while levels < max_levels and side >= window * 2 ** levels:
        levels += 1
    return levels


def ms_ssim(a, b, levels: int = 5, weights: Sequence[float] = MS_SSIM_WEIGHTS, window: int = 11,
            k1: float = 0.01, k2: float = 0.03, peak: float = 255.0) -> float:
    """Multi-scale SSIM over dyadic 2x2-average pyramids.

    Contrast-structure means enter at every scale but the coarsest, which
    uses the full SSIM mean. Negative terms are clipped to zero before the
    fractional powers. Small images use fewer levels with the leading
    weights renormalized.
    """
    a, b = _pair(a, b)
    usable = min(levels, ms_ssim_levels(a.shape, window, len(weights)))
    if usable < 1:
        raise ValueError(f"image {a.shape} is too small for one {window}x{window} SSIM level")
    w = np.asarray(weights[:usable], dtype=np.float64)
    w = w / w.sum()
    g = gaussian_window(window)
    c1, c2 = (k1 * peak) ** 2, (k2 * peak) ** 2
    result = 1.0
    for level in range(usable):
        lum, cs = _ssim_maps(a, b, g, c1, c2)
        term = np.mean(lum * cs) if level == usable - 1 else np.mean(cs)
        result *= max(float(term), 0.0) ** w[level]
        a, b = _downsample(a), _downsample(b)
    return float(result)


def uiqi(a, b, window: int = 8) -> float:
    """Universal image quality index averaged over sliding ``window`` blocks."""
    a, b = _pair(a, b)
    if min(a.shape) < window:
        raise ValueError(f"image {a.shape} is smaller than the {window}x{window} window")
    g = np.full(window, 1.0 / window)
    mu_a, mu_b = _filter_valid(a, g), _filter_valid(b, g)
    saa = np.maximum(_filter_valid(a * a, g) - mu_a * mu_a, 0.0)
    sbb = np.maximum(_filter_valid(b * b, g) - mu_b * mu_b, 0.0)
    sab = _filter_valid(a * b, g) - mu_a * mu_b
    return float(np.mean(_uiqi_combine(mu_a, mu_b, saa, sbb, sab)))


def _uiqi_combine(mu_a, mu_b, saa, sbb, sab):
    var_sum = saa + sbb
    mean_sq = mu_a * mu_a + mu_b * mu_b
    # near-zero variances come from cancellation in E[x^2] - E[x]^2
    tiny = 1e-10 * np.maximum(mean_sq, 1.0)
    var_zero = var_sum <= tiny
    mean_zero = mean_sq <= 0
    q = np.ones_like(mu_a)
    with np.errstate(divide="ignore", invalid="ignore"):
        full = 4 * sab * mu_a * mu_b / (var_sum * mean_sq)
        mean_only = 2 * mu_a * mu_b / mean_sq
        var_only = 2 * sab / var_sum
    both = ~var_zero & ~mean_zero
    q[both] = full[both]
    m = var_zero & ~mean_zero
    q[m] = mean_only[m]
    m = ~var_zero & mean_zero
    q[m] = var_only[m]
    return q


# -- evaluation on 8-bit images ---------------------------------------------

def evaluate_pair(pred_rgb: np.ndarray, ref_rgb: np.ndarray, metrics: Sequence[str] = METRICS) -> Dict[str, float]:
    """Score two ``H x W x 3`` uint8 images on their Rec.601 luma."""
    p, r = to_luma(pred_rgb), to_luma(ref_rgb)
    if p.shape != r.shape:
        raise ValueError(f"image shapes differ: {p.shape} vs {r.shape}")
    fns = {"psnr": psnr, "ssim": ssim, "ms_ssim": ms_ssim, "uiqi": uiqi}
    return {m: fns[m](p, r) for m in metrics}


@dataclass
class MetricReport:
    names: List[str] = field(default_factory=list)
    values: Dict[str, List[float]] = field(default_factory=dict)

    @property
    def count(self) -> int:
        return len(self.names)

    def add(self, name: str, scores: Dict[str, float]):
        self.names.append(name)
        for k, v in scores.items():
            self.values.setdefault(k, []).append(float(v))

    def mean(self, metric: str) -> float:
        vals = self.values.get(metric, [])
        return float(np.mean(vals)) if vals else float("nan")

    def to_json(self) -> dict:
        out = {"count": self.count, "images": list(self.names)}
        for k, vals in self.values.items():
            out[k] = {"per_image": [_jsonable(v) for v in vals], "mean": _jsonable(self.mean(k))}
        return out

    def to_csv(self) -> str:
        keys = list(self.values)
        lines = [",".join(["image"] + keys)]
        for i, n in enumerate(self.names):
            lines.append(",".join([n] + [repr(self.values[k][i]) for k in keys]))
        lines.append(",".join(["mean"] + [repr(self.mean(k)) for k in keys]))
        return "\n".join(lines) + "\n"


def _jsonable(v: float):
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if math.isnan(v):
        return None
    return v
