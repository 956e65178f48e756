"""Conditional Markovian patch discriminator with ten convolutional layers.

The blurred input and the candidate image are stacked along channels and
passed through a fixed ladder: four 3x3 stride-2 layers (64, 128, 256, 512
maps), five 3x3 stride-1 layers at 512 maps and a 1x1 projection to one
map, with a sigmoid on every patch unit.
"""
from __future__ import annotations

from typing import List, Sequence, Tuple

import numpy as np

from .autograd import Tensor, concat_channels, instance_norm, leaky_relu, no_grad, sigmoid
from .nn import Conv, Module

# (out_channels, kernel, stride) per layer
DEFAULT_LADDER: Tuple[Tuple[int, int, int], ...] = (
    (64, 3, 2), (128, 3, 2), (256, 3, 2), (512, 3, 2),
    (512, 3, 1), (512, 3, 1), (512, 3, 1), (512, 3, 1), (512, 3, 1),
    (1, 1, 1),
)


class Discriminator(Module):
    def __init__(self, image_channels: int = 3, rng_seed=0, ladder: Sequence = DEFAULT_LADDER,
                 leaky_slope: float = 0.2, instance_norm: bool = False):
        super().__init__()
        if image_channels < 1:
            raise ValueError("image_channels must be >= 1")
        if len(ladder) != 10:
            raise ValueError(f"the patch discriminator has exactly 10 layers, got {len(ladder)}")
        rng = np.random.default_rng(rng_seed)
        self.image_channels = image_channels
        self.leaky_slope = leaky_slope
        self.ladder = tuple(tuple(x) for x in ladder)
        self.layers: List[Conv] = []
        self.norms = []
        cin = 2 * image_channels
        for i, (cout, k, stride) in enumerate(self.ladder, start=1):
            self.layers.append(Conv(self, f"discriminator.layer{i}", cin, cout, k, rng, stride=stride))
            if instance_norm and 1 < i < len(self.ladder):
                self.norms.append((self.add_param(f"discriminator.norm{i}.weight", np.ones(cout)),
                                   self.add_param(f"discriminator.norm{i}.bias", np.zeros(cout))))
            else:
                self.norms.append(None)
            cin = cout

    def output_size(self, h: int, w: int) -> Tuple[int, int]:
        for conv in self.layers:
            h = (h + 2 * conv.padding - (conv.k - 1) - 1) // conv.stride + 1
            w = (w + 2 * conv.padding - (conv.k - 1) - 1) // conv.stride + 1
        return h, w

    def receptive_field(self) -> int:
        """Side length of the input window seen by one patch unit."""
        rf, jump = 1, 1
        for conv in self.layers:
            rf += (conv.k - 1) * conv.dilation * jump
            jump *= conv.stride
        return rf

    def forward(self, blurred: Tensor, candidate: Tensor) -> Tensor:
        if blurred.shape != candidate.shape:
            raise ValueError(f"blurred {blurred.shape} and candidate {candidate.shape} shapes differ")
        if blurred.ndim != 4 or blurred.shape[1] != self.image_channels:
            raise ValueError(f"expected B x {self.image_channels} x H x W inputs, got {blurred.shape}")
        x = concat_channels([blurred, candidate])
        last = len(self.layers) - 1
        for i, (conv, norm) in enumerate(zip(self.layers, self.norms)):
            x = conv(x)
            if i == last:
                break
            if norm is not None:
                x = instance_norm(x, *norm)
            x = leaky_relu(x, self.leaky_slope)
        return sigmoid(x)

    __call__ = forward

    def infer(self, blurred: np.ndarray, candidate: np.ndarray) -> np.ndarray:
        with no_grad():
            return self.forward(Tensor(np.asarray(blurred, self.dtype)),
                                Tensor(np.asarray(candidate, self.dtype))).data


def build_discriminator(image_channels: int = 3, rng_seed=0, **kwargs) -> Discriminator:
    return Discriminator(image_channels, rng_seed, **kwargs)


def discriminator_forward(disc: Discriminator, blurred: Tensor, candidate: Tensor) -> Tensor:
    return disc.forward(blurred, candidate)
