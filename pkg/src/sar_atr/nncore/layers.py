"""Parameterized layers and a minimal module container."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import functional as F
from .tensor import Parameter, Tensor


@dataclass(frozen=True)
class ConvSpec:
    n: int  # output channels
    k: int  # kernel size
    s: int  # stride
    p: int  # padding

    def __post_init__(self):
        if min(self.n, self.k, self.s) < 1 or self.p < 0:
            raise ValueError(f"invalid conv spec {self}")

    def output_size(self, size: int) -> int:
        return F.conv_output_size(size, self.k, self.s, self.p)


class Module:
    """Collects :class:`Parameter` attributes, recursing into child modules."""

    def named_parameters(self, prefix: str = ""):
        for name, value in vars(self).items():
            if isinstance(value, Parameter):
                yield prefix + name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{prefix}{name}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{name}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def requires_grad_(self, flag: bool = True):
        for p in self.parameters():
            p.requires_grad = flag
        return self

    def astype(self, dtype):
        for p in self.parameters():
            p.data = p.data.astype(dtype)
            p.grad = None
        return self

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        extra = set(state) - set(own)
        if missing or extra:
            raise KeyError(f"state mismatch: missing={sorted(missing)} unexpected={sorted(extra)}")
        for name, p in own.items():
            value = np.asarray(state[name])
            if value.shape != p.shape:
                raise ValueError(f"{name}: shape {value.shape} != {p.shape}")
            p.data = value.astype(p.dtype)

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters())


def _uniform(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    # He-style bound for ReLU stacks
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Conv2d(Module):
    def __init__(self, in_channels: int, spec: ConvSpec, rng: np.random.Generator,
                 dtype=np.float32):
        self.spec = spec
        fan_in = in_channels * spec.k * spec.k
        self.weight = Parameter(_uniform(rng, (spec.n, in_channels, spec.k, spec.k), fan_in, dtype))
        self.bias = Parameter(np.zeros(spec.n, dtype=dtype))

    def __call__(self, x: Tensor) -> Tensor:
        return F.conv2d(x, self.weight, self.bias, self.spec.s, self.spec.p)


class Linear(Module):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator,
                 dtype=np.float32):
        self.weight = Parameter(_uniform(rng, (out_features, in_features), in_features, dtype))
        self.bias = Parameter(np.zeros(out_features, dtype=dtype))

    def __call__(self, x: Tensor) -> Tensor:
        return F.linear(x, self.weight, self.bias)
