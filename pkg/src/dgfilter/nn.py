"""Parameter containers shared by the generator, discriminator and extractor."""
from __future__ import annotations

from collections import OrderedDict

import numpy as np

from .autograd import Parameter, Tensor, conv2d


class Module:
    """Holds uniquely named parameters in registration order."""

    def __init__(self):
        self._params: "OrderedDict[str, Parameter]" = OrderedDict()

    def add_param(self, name: str, data, requires_grad: bool = True) -> Parameter:
        if name in self._params:
            raise KeyError(f"duplicate parameter name {name!r}")
        p = Parameter(name, np.ascontiguousarray(data, dtype=np.float32), requires_grad=requires_grad)
        self._params[name] = p
        return p

    def named_parameters(self) -> "OrderedDict[str, Parameter]":
        return self._params

    def parameters(self) -> list:
        return list(self._params.values())

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self._params.values()))

    def zero_grad(self):
        for p in self._params.values():
            if p.requires_grad:
                p.grad = np.zeros_like(p.data)

    def to(self, dtype):
        """Cast all parameters in place (float64 for gradient checking)."""
        for p in self._params.values():
            p.data = np.ascontiguousarray(p.data, dtype=dtype)
            if p.grad is not None:
                p.grad = np.zeros_like(p.data)
        return self

    @property
    def dtype(self):
        first = next(iter(self._params.values()), None)
        return first.dtype if first is not None else np.dtype(np.float32)

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((k, p.data.copy()) for k, p in self._params.items())

    def load_state_dict(self, state):
        from .checkpoint import ShapeMismatchError

        for name, p in self._params.items():
            if name not in state:
                raise ShapeMismatchError(f"checkpoint is missing parameter {name!r}", name=name)
            arr = np.asarray(state[name])
            if arr.shape != p.shape:
                raise ShapeMismatchError(
                    f"parameter {name!r}: checkpoint shape {arr.shape} != model shape {p.shape}", name=name)
        for name, p in self._params.items():
            p.data = np.array(state[name], dtype=p.dtype)


class Conv:
    """A convolution layer bound to two parameters of a :class:`Module`."""

    def __init__(self, owner: Module, name: str, cin: int, cout: int, k: int, rng, stride=1,
                 dilation=1, std=0.02, trainable=True):
        self.k, self.stride, self.dilation = k, stride, dilation
        self.padding = dilation * (k - 1) // 2
        self.weight = owner.add_param(f"{name}.weight", rng.normal(0.0, std, size=(cout, cin, k, k)),
                                      requires_grad=trainable)
        self.bias = owner.add_param(f"{name}.bias", np.zeros(cout), requires_grad=trainable)

    @property
    def in_channels(self):
        return self.weight.shape[1]

    @property
    def out_channels(self):
        return self.weight.shape[0]

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias, stride=self.stride, dilation=self.dilation,
                      padding=self.padding)
