"""Blind motion deblurring with a densely connected, dilated generator.

Everything runs on a small numpy reverse-mode autograd engine
(:mod:`dgfilter.autograd`) with optional compiled convolution kernels.
"""
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
