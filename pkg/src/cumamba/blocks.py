"""Shape-preserving restoration blocks over (B, H, W, C) feature maps.

SpatialSsmBlock scans the flattened map in raster order so every pixel
conditions on everything scanned before it. ChannelSsmBlock transposes the
map and scans the channels as tokens (feature width = H*W), which ties each
instance to the resolution it was built for. Both wrap their body in a
residual connection, so a zero-initialized body passes the input through
unchanged and deep stacks stay trainable from init.
"""

from __future__ import annotations

import numpy as np

from .nn import Conv2d, LayerNorm, Module
from .ssm import SelectiveSSM
from .tensor import ShapeError, Tensor


def _to_nchw(x: Tensor) -> Tensor:
    return x.permute(0, 3, 1, 2)


def _to_nhwc(x: Tensor) -> Tensor:
    return x.permute(0, 2, 3, 1)


class SpatialSsmBlock(Module):
    def __init__(self, channels: int, rng: np.random.Generator, state_size: int = 16,
                 expansion: int = 2, conv_width: int = 4, scan_mode: str = "parallel",
                 scan_chunk: int = 64, dtype=np.float32):
        super().__init__()
        self.channels = channels
        self.norm = LayerNorm(channels, dtype)
        self.pw = Conv2d("pointwise1x1", channels, channels, rng, dtype)
        self.dw = Conv2d("depthwise3x3", channels, channels, rng, dtype)
        self.ssm = SelectiveSSM(channels, rng, state_size, expansion, conv_width,
                                scan_mode, scan_chunk, dtype)

    def body(self, x: Tensor) -> Tensor:
        """Pre-residual path: norm, local mixing, raster-order scan."""
        B, H, W, C = x.shape
        t = self.norm(x)
        t = _to_nhwc(self.dw(self.pw(_to_nchw(t))))
        t = t.reshape(B, H * W, C)          # raster order: row-major flatten
        t = self.ssm(t)
        return t.reshape(B, H, W, C)

    def __call__(self, x: Tensor) -> Tensor:
        return x + self.body(x)


class ChannelSsmBlock(Module):
    def __init__(self, channels: int, resolution: tuple[int, int], rng: np.random.Generator,
                 state_size: int = 16, expansion: int = 2, conv_width: int = 4,
                 scan_mode: str = "parallel", scan_chunk: int = 64,
                 leaky_slope: float = 0.01, dtype=np.float32):
        super().__init__()
        self.channels = channels
        self.resolution = tuple(resolution)
        self.seq_width = resolution[0] * resolution[1]
        self.leaky_slope = leaky_slope
        self.norm = LayerNorm(channels, dtype)
        self.pw = Conv2d("pointwise1x1", channels, channels, rng, dtype)
        self.dw = Conv2d("depthwise3x3", channels, channels, rng, dtype)
        self.ssm = SelectiveSSM(self.seq_width, rng, state_size, expansion, conv_width,
                                scan_mode, scan_chunk, dtype)
        self.smooth1 = Conv2d("depthwise3x3", channels, channels, rng, dtype)
        self.smooth2 = Conv2d("depthwise3x3", channels, channels, rng, dtype)

    def _check_resolution(self, x: Tensor) -> None:
        got = (x.shape[1], x.shape[2])
        if got != self.resolution:
            raise ShapeError(
                f"channel block was built for {self.resolution[0]}x{self.resolution[1]} maps "
                f"(token width {self.seq_width}) but got {got[0]}x{got[1]}; "
                f"run at the construction resolution or tile the input")

    def scan_part(self, x: Tensor) -> Tensor:
        """Norm, local mixing, then the top-to-bottom scan over channel tokens."""
        self._check_resolution(x)
        B, H, W, C = x.shape
        t = self.norm(x)
        t = self.dw(self.pw(_to_nchw(t)))    # (B, C, H, W)
        t = t.reshape(B, C, H * W)           # tokens are channels
        t = self.ssm(t)
        return _to_nhwc(t.reshape(B, C, H, W))

    def body(self, x: Tensor) -> Tensor:
        t = _to_nchw(self.scan_part(x))
        t = self.smooth1(t).leaky_relu(self.leaky_slope)
        t = self.smooth2(t).leaky_relu(self.leaky_slope)
        return _to_nhwc(t)

    def __call__(self, x: Tensor) -> Tensor:
        return x + self.body(x)


class CuMambaBlock(Module):
    """Spatial scan block followed by the channel scan block."""

    def __init__(self, channels: int, resolution: tuple[int, int], rng: np.random.Generator,
                 state_size: int = 16, expansion: int = 2, conv_width: int = 4,
                 scan_mode: str = "parallel", scan_chunk: int = 64,
                 leaky_slope: float = 0.01, dtype=np.float32,
                 use_spatial: bool = True, use_channel: bool = True):
        super().__init__()
        if use_spatial:
            self.spatial = SpatialSsmBlock(channels, rng, state_size, expansion,
                                           conv_width, scan_mode, scan_chunk, dtype)
        else:
            self.spatial = None
        if use_channel:
            self.channel = ChannelSsmBlock(channels, resolution, rng, state_size, expansion,
                                           conv_width, scan_mode, scan_chunk, leaky_slope, dtype)
        else:
            self.channel = None

    def __call__(self, x: Tensor) -> Tensor:
        if self.spatial is not None:
            x = self.spatial(x)
        if self.channel is not None:
            x = self.channel(x)
        return x


class ResConvBlock(Module):
    """Plain residual conv block, the non-scan baseline."""

    def __init__(self, channels: int, rng: np.random.Generator,
                 leaky_slope: float = 0.01, dtype=np.float32):
        super().__init__()
        self.leaky_slope = leaky_slope
        self.norm = LayerNorm(channels, dtype)
        self.conv1 = Conv2d("plain3x3", channels, channels, rng, dtype)
        self.conv2 = Conv2d("plain3x3", channels, channels, rng, dtype)

    def body(self, x: Tensor) -> Tensor:
        t = _to_nchw(self.norm(x))
        t = self.conv2(self.conv1(t).leaky_relu(self.leaky_slope))
        return _to_nhwc(t)

    def __call__(self, x: Tensor) -> Tensor:
        return x + self.body(x)
