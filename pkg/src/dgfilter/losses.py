"""Pixel, perceptual and conditional adversarial losses."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .autograd import ShapeError, Tensor, absolute, clamp, log, mean_all, no_grad, relu, square
from .nn import Conv, Module

EPS = 1e-7
K1_PERCEPTUAL = 145.0
K2_L1 = 170.0


@dataclass
class LossWeights:
    k1: float = K1_PERCEPTUAL  # perceptual
    k2: float = K2_L1  # l1
    gan: float = 1.0

    def __post_init__(self):
        if self.k1 < 0 or self.k2 < 0 or self.gan < 0:
            raise ValueError("loss weights must be non-negative")


class FeatureExtractor(Module):
    """Frozen feature map used by the perceptual loss.

    ``kind`` is ``identity``, ``random`` (seeded conv + ReLU stack with
    stride 2, widths 32/64/128) or ``external`` (weights from a checkpoint
    file, see :meth:`from_checkpoint`).
    """

    def __init__(self, kind: str = "random", image_channels: int = 3, rng_seed: int = 1234,
                 widths: Sequence[int] = (32, 64, 128), strides: Optional[Sequence[int]] = None):
        super().__init__()
        if kind not in ("identity", "random", "external"):
            raise ValueError(f"unknown extractor kind {kind!r}")
        self.kind = kind
        self.image_channels = image_channels
        self.layers = []
        if kind == "random":
            rng = np.random.default_rng(rng_seed)
            strides = strides or [2] * len(widths)
            cin = image_channels
            for i, (w, s) in enumerate(zip(widths, strides), start=1):
                std = np.sqrt(2.0 / (cin * 9))
                self.layers.append(Conv(self, f"extractor.layer{i}", cin, w, 3, rng, stride=s, std=std,
                                        trainable=False))
                cin = w

    @classmethod
    def from_checkpoint(cls, path, image_channels: int = 3) -> "FeatureExtractor":
        """Load ``extractor.layer{i}.{weight,bias}`` records as a 3x3 conv + ReLU stack.

        Per-layer strides come from ``config["extractor_strides"]`` in the
        checkpoint header (default 1).
        """
        from .checkpoint import load_checkpoint

        ckpt = load_checkpoint(path)
        ext = cls("identity", image_channels)
        ext.kind = "external"
        names = sorted({n.rsplit(".", 1)[0] for n in ckpt.tensors if n.startswith("extractor.layer")},
                       key=lambda s: int(s[len("extractor.layer"):]))
        if not names:
            raise ShapeError(f"{path}: no extractor.layer* records")
        strides = ckpt.config.get("extractor_strides", [1] * len(names))
        cin = image_channels
        rng = np.random.default_rng(0)
        for i, (prefix, s) in enumerate(zip(names, strides), start=1):
            w = ckpt.tensors[f"{prefix}.weight"]
            if w.ndim != 4 or w.shape[1] != cin:
                raise ShapeError(f"{prefix}.weight has shape {w.shape}, expected input width {cin}")
            conv = Conv(ext, f"extractor.layer{i}", cin, w.shape[0], w.shape[2], rng, stride=int(s),
                        trainable=False)
            conv.weight.data = np.ascontiguousarray(w, dtype=np.float32)
            conv.bias.data = np.ascontiguousarray(ckpt.tensors[f"{prefix}.bias"], dtype=np.float32)
            ext.layers.append(conv)
            cin = w.shape[0]
        return ext

    def __call__(self, x: Tensor) -> Tensor:
        if x.ndim != 4 or x.shape[1] != self.image_channels:
            raise ShapeError(f"extractor expects B x {self.image_channels} x H x W, got {x.shape}")
        for conv in self.layers:
            x = relu(conv(x))
        return x


def l1_loss(a: Tensor, b: Tensor) -> Tensor:
    """Mean absolute difference."""
    if a.shape != b.shape:
        raise ShapeError(f"l1_loss: shapes {a.shape} and {b.shape} differ")
    return mean_all(absolute(a - b))


def perceptual_loss(extractor: FeatureExtractor, ground_truth: Tensor, generated: Tensor) -> Tensor:
    """Mean squared feature difference; the target branch carries no gradient.

    Averaged over feature width and height, and additionally over channels
    and batch so the magnitude does not depend on extractor width.
    """
    if ground_truth.shape != generated.shape:
        raise ShapeError(f"perceptual_loss: shapes {ground_truth.shape} and {generated.shape} differ")
    with no_grad():
        target = extractor(ground_truth.detach())
    feats = extractor(generated)
    return mean_all(square(feats - target.detach()))


def _clamped_log(p: Tensor) -> Tensor:
    return log(clamp(p, EPS, 1.0 - EPS))


def gan_discriminator_loss(d_real: Tensor, d_fake: Tensor) -> Tensor:
    """``-mean log D(real) - mean log(1 - D(fake))`` over patch units."""
    return -mean_all(_clamped_log(d_real)) - mean_all(log(clamp(1.0 - d_fake, EPS, 1.0 - EPS)))


def gan_generator_loss_conditional(d_fake_conditional: Tensor) -> Tensor:
    """``-mean log D(G(blurred) | blurred)``."""
    return -mean_all(_clamped_log(d_fake_conditional))


def net_loss(gan, percep, l1, w: Optional[LossWeights] = None):
    """Combined generator objective ``gan + k1*percep + k2*l1``."""
    w = w or LossWeights()
    return gan * w.gan + percep * w.k1 + l1 * w.k2
