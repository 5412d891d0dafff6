"""Parameter registry and the small layer zoo the network is assembled from.

Modules register Parameters and sub-Modules in attribute order, so walking
named_parameters() is deterministic given a fixed construction order. Every
layer takes an explicit numpy Generator for initialization; nothing touches
global RNG state.
"""

from __future__ import annotations

from typing import Iterator

import numpy as np

from . import conv as convops
from .tensor import Tensor, layer_norm


class Parameter(Tensor):
    """Trainable leaf tensor. ``decay=False`` opts out of weight decay."""

    __slots__ = ("decay",)

    def __init__(self, data, decay: bool = True, dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)
        self.decay = decay


class Module:
    def __init__(self):
        object.__setattr__(self, "_children", {})

    def __setattr__(self, name, value):
        if isinstance(value, (Parameter, Module)):
            self._children[name] = value
        object.__setattr__(self, name, value)

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for name, child in self._children.items():
            path = f"{prefix}.{name}" if prefix else name
            if isinstance(child, Parameter):
                yield path, child
            else:
                yield from child.named_parameters(path)

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def num_params(self) -> int:
        return sum(p.size for p in self.parameters())

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for name, p in self.named_parameters():
            if name not in state:
                raise KeyError(f"missing parameter '{name}' in state")
            if state[name].shape != p.shape:
                raise ValueError(f"parameter '{name}' shape {state[name].shape} != {p.shape}")
            p.data = state[name].astype(p.dtype, copy=True)

    def state(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}


class ModuleList(Module):
    def __init__(self, modules=()):
        super().__init__()
        self._items: list[Module] = []
        for m in modules:
            self.append(m)

    def append(self, module: Module) -> None:
        self._children[str(len(self._items))] = module
        self._items.append(module)

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, i):
        return self._items[i]


def _uniform(rng: np.random.Generator, shape, bound: float, dtype) -> np.ndarray:
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Linear(Module):
    """y = x @ W + b with W stored (in_features, out_features)."""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator,
                 dtype=np.float32, bias: bool = True):
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features
        bound = 1.0 / np.sqrt(in_features)
        self.weight = Parameter(_uniform(rng, (in_features, out_features), bound, dtype))
        self.bias = Parameter(np.zeros(out_features, dtype=dtype), decay=False) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = x @ self.weight
        if self.bias is not None:
            y = y + self.bias
        return y


class Conv2d(Module):
    """One of the supported conv kinds over (B, C, H, W) maps."""

    def __init__(self, kind: str, in_channels: int, out_channels: int, rng: np.random.Generator,
                 dtype=np.float32, zero_init: bool = False):
        super().__init__()
        self.kind = kind
        if kind == "pointwise1x1":
            shape, fan_in = (out_channels, in_channels, 1, 1), in_channels
        elif kind == "plain3x3":
            shape, fan_in = (out_channels, in_channels, 3, 3), 9 * in_channels
        elif kind == "depthwise3x3":
            if in_channels != out_channels:
                raise ValueError("depthwise3x3 requires in_channels == out_channels")
            shape, fan_in = (in_channels, 1, 3, 3), 9
        elif kind == "strided2x2":
            shape, fan_in = (out_channels, in_channels, 2, 2), 4 * in_channels
        elif kind == "transposed2x2":
            shape, fan_in = (in_channels, out_channels, 2, 2), in_channels
        else:
            raise ValueError(f"unknown conv kind '{kind}'")
        if zero_init:
            w = np.zeros(shape, dtype=dtype)
        else:
            w = _uniform(rng, shape, 1.0 / np.sqrt(fan_in), dtype)
        self.weight = Parameter(w)
        self.bias = Parameter(np.zeros(out_channels, dtype=dtype), decay=False)

    def __call__(self, x: Tensor) -> Tensor:
        return convops.conv2d(x, self.weight, self.bias, self.kind)


class CausalConv1d(Module):
    """Depthwise causal conv along the token axis of (B, L, C)."""

    def __init__(self, channels: int, width: int, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.width = width
        bound = 1.0 / np.sqrt(width)
        self.weight = Parameter(_uniform(rng, (channels, width), bound, dtype))
        self.bias = Parameter(np.zeros(channels, dtype=dtype), decay=False)

    def __call__(self, x: Tensor) -> Tensor:
        return convops.causal_conv1d(x, self.weight, self.bias)


class LayerNorm(Module):
    def __init__(self, channels: int, dtype=np.float32, eps: float = 1e-6):
        super().__init__()
        self.eps = eps
        self.gamma = Parameter(np.ones(channels, dtype=dtype), decay=False)
        self.beta = Parameter(np.zeros(channels, dtype=dtype), decay=False)

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gamma, self.beta, self.eps)
