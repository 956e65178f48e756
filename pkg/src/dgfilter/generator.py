"""Densely connected generator: head, dense field, tail and global skip.

The head lifts the image to ``4*chr`` maps. Dense block ``m`` sees the
concatenation of the head output and every earlier block output
(``4*chr + (m-1)*chr`` channels), chokes it to ``4*chr`` with a 1x1
convolution and emits ``chr`` maps from a 3x3 convolution whose dilation
follows :func:`dilation_schedule`. The tail maps the whole field back to
``4*chr``, is concatenated with the head output and fused to the image.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import List, NamedTuple, Optional

import numpy as np

from .autograd import (Tensor, concat_channels, dropout, instance_norm, leaky_relu, no_grad,
                       tanh)
from .nn import Conv, Module

VARIANTS = ("dense", "variant_a", "variant_b")
RESIDUAL_RUN = 3


@dataclass
class GeneratorConfig:
    chr: int = 64
    num_blocks: int = 10
    leaky_slope: float = 0.2
    dropout_rate: float = 0.5
    variant: str = "dense"
    image_channels: int = 3
    instance_norm: bool = True
    global_skip: bool = True

    def validate(self):
        if self.chr < 1:
            raise ValueError("chr must be >= 1")
        if self.num_blocks < 2 or self.num_blocks % 2:
            raise ValueError(f"num_blocks must be even and >= 2, got {self.num_blocks}")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.variant == "variant_a" and self.num_blocks < 2 * RESIDUAL_RUN + 1:
            raise ValueError("variant_a needs at least 7 blocks (3 residual at each end)")
        if self.variant == "variant_b" and self.num_blocks < RESIDUAL_RUN + 2:
            raise ValueError("variant_b needs at least 5 blocks (dense on both sides of 3 residual)")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.image_channels < 1:
            raise ValueError("image_channels must be >= 1")
        return self

    def to_dict(self):
        return asdict(self)


class PlanEntry(NamedTuple):
    kind: str  # "dense", "residual" or "tail"
    input: int
    choke: Optional[int]
    output: int


def dilation_schedule(n: int) -> List[int]:
    """Dilation per block: 1 at odd positions, a linear rise and fall at even ones.

    >>> dilation_schedule(10)
    [1, 2, 1, 3, 1, 4, 1, 3, 1, 2]
    """
    if n < 1 or n % 2:
        raise ValueError(f"dilation schedule needs an even number of blocks, got {n}")
    return [1 if i % 2 else 1 + min(i, n - i + 2) // 2 for i in range(1, n + 1)]


def block_kinds(config: GeneratorConfig) -> List[str]:
    n = config.num_blocks
    if config.variant == "variant_a":
        return ["residual" if i < RESIDUAL_RUN or i >= n - RESIDUAL_RUN else "dense" for i in range(n)]
    if config.variant == "variant_b":
        start = (n - RESIDUAL_RUN) // 2
        return ["residual" if start <= i < start + RESIDUAL_RUN else "dense" for i in range(n)]
    return ["dense"] * n


def channel_plan(config: GeneratorConfig) -> List[PlanEntry]:
    """Per-block channel counts followed by a final ``tail`` entry.

    Dense blocks append ``chr`` maps to the running concatenation; residual
    blocks (ablation variants) restart it from their ``4*chr`` output.
    """
    config.validate()
    base = 4 * config.chr
    plan = []
    width = base
    for kind in block_kinds(config):
        if kind == "dense":
            plan.append(PlanEntry("dense", width, base, config.chr))
            width += config.chr
        else:
            plan.append(PlanEntry("residual", width, base, base))
            width = base
    plan.append(PlanEntry("tail", width, None, base))
    return plan


class _Block:
    def __init__(self, gen: Module, m: int, entry: PlanEntry, dilation: int, cfg: GeneratorConfig, rng):
        prefix = f"generator.dense.{m}"
        self.m = m
        self.kind = entry.kind
        self.input_channels = entry.input
        self.dilation = dilation
        self.choke = Conv(gen, f"{prefix}.choke", entry.input, entry.choke, 1, rng)
        self.norm = None
        if cfg.instance_norm:
            self.norm = (gen.add_param(f"{prefix}.norm.weight", np.ones(entry.choke)),
                         gen.add_param(f"{prefix}.norm.bias", np.zeros(entry.choke)))
        self.conv = Conv(gen, f"{prefix}.conv", entry.choke, entry.output, 3, rng, dilation=dilation)

    def __call__(self, x: Tensor, slope: float, rate: float, training: bool, seed) -> Tensor:
        assert x.shape[1] == self.input_channels, (
            f"block {self.m} expected {self.input_channels} input channels, got {x.shape[1]}")
        h = self.choke(leaky_relu(x, slope))
        if self.norm is not None:
            h = instance_norm(h, *self.norm)
        r = dropout(self.conv(leaky_relu(h, slope)), rate, training, seed)
        return h + r if self.kind == "residual" else r


class Generator(Module):
    """The generator network; parameter shapes follow :func:`channel_plan`."""

    def __init__(self, config: GeneratorConfig, rng_seed=0):
        super().__init__()
        self.config = config.validate()
        rng = np.random.default_rng(rng_seed)
        c = config
        self.plan = channel_plan(c)
        self.dilations = dilation_schedule(c.num_blocks)
        self.head = Conv(self, "generator.head", c.image_channels, 4 * c.chr, 3, rng)
        self.blocks = [_Block(self, m + 1, entry, d, c, rng)
                       for m, (entry, d) in enumerate(zip(self.plan[:-1], self.dilations))]
        tail = self.plan[-1]
        self.tail = Conv(self, "generator.tail", tail.input, tail.output, 1, rng)
        fuse_in = 2 * tail.output if c.global_skip else tail.output
        self.final = Conv(self, "generator.final", fuse_in, c.image_channels, 3, rng)

    @property
    def max_dilation(self) -> int:
        return max(self.dilations)

    def dense_field(self, head_out: Tensor, training: bool = False, rng_seed=None) -> Tensor:
        """Run the N blocks; returns the tensor entering the tail."""
        cfg = self.config
        seeds = _block_seeds(rng_seed, len(self.blocks)) if training else [None] * len(self.blocks)
        feats = [head_out]
        for block, seed in zip(self.blocks, seeds):
            y = block(concat_channels(feats), cfg.leaky_slope, cfg.dropout_rate, training, seed)
            if block.kind == "dense":
                feats.append(y)
            else:
                feats = [y]
        return concat_channels(feats)

    def forward(self, image: Tensor, training: bool = False, rng_seed=None) -> Tensor:
        if not isinstance(image, Tensor):
            image = Tensor(np.asarray(image, dtype=self.dtype))
        cfg = self.config
        if image.ndim != 4 or image.shape[1] != cfg.image_channels:
            raise ValueError(f"expected B x {cfg.image_channels} x H x W input, got {image.shape}")
        lo, hi = float(image.data.min()), float(image.data.max())
        if lo < -1.0 or hi > 1.0:
            raise ValueError(f"input values must lie in [-1, 1], got range [{lo:.4g}, {hi:.4g}]")
        min_side = 2 * self.max_dilation + 1
        if min(image.shape[2:]) < min_side:
            raise ValueError(f"spatial size must be at least {min_side} for dilation {self.max_dilation}")
        head = self.head(image)
        field = self.dense_field(head, training, rng_seed)
        tail = self.tail(leaky_relu(field, cfg.leaky_slope))
        fused = concat_channels([head, tail]) if cfg.global_skip else tail
        return tanh(self.final(fused))

    __call__ = forward

    def infer(self, image: np.ndarray) -> np.ndarray:
        """Inference without graph construction; dropout is off."""
        with no_grad():
            return self.forward(Tensor(np.asarray(image, dtype=self.dtype)), training=False).data


def _block_seeds(seed, n):
    if seed is None:
        return [None] * n
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(n)]


def build_generator(config: Optional[GeneratorConfig] = None, rng_seed=0) -> Generator:
    return Generator(config or GeneratorConfig(), rng_seed)


def generator_forward(gen: Generator, image: Tensor, training: bool = False, rng_seed=None) -> Tensor:
    return gen.forward(image, training, rng_seed)
