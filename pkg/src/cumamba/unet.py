"""Symmetric encoder-decoder assembly with skip concatenation and a global
residual: the network predicts a correction R and returns I + R.

Level l (0-based) runs at H/2^l x W/2^l with width 2^l * base_width; the last
level is the bottleneck, so `levels` levels use `levels - 1` down/upsamples.
Because the channel blocks fix their token width to H*W at construction, the
network operates on fixed-size patches; tiled_infer covers larger images.
"""

from __future__ import annotations

import numpy as np

from .blocks import CuMambaBlock, ResConvBlock
from .config import CuMambaConfig
from .nn import Conv2d, Module, ModuleList
from .tensor import ShapeError, Tensor, cat, no_grad


def _make_block(cfg: CuMambaConfig, channels: int, resolution: tuple[int, int],
                rng: np.random.Generator, dtype) -> Module:
    if not cfg.use_spatial_ssm and not cfg.use_channel_ssm:
        return ResConvBlock(channels, rng, cfg.leaky_slope, dtype)
    return CuMambaBlock(
        channels, resolution, rng,
        state_size=cfg.state_size, expansion=cfg.expansion, conv_width=cfg.conv_width,
        scan_chunk=cfg.scan_chunk, leaky_slope=cfg.leaky_slope, dtype=dtype,
        use_spatial=cfg.use_spatial_ssm, use_channel=cfg.use_channel_ssm)


def _level_stack(cfg: CuMambaConfig, level: int, rng: np.random.Generator, dtype) -> ModuleList:
    channels = cfg.base_width << level
    res = (cfg.patch_size[0] >> level, cfg.patch_size[1] >> level)
    return ModuleList(_make_block(cfg, channels, res, rng, dtype)
                      for _ in range(cfg.blocks_per_level[level]))


class CuMambaNet(Module):
    def __init__(self, cfg: CuMambaConfig, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        self.dtype = dtype
        C = cfg.base_width
        top = cfg.levels - 1

        self.in_conv = Conv2d("plain3x3", 3, C, rng, dtype)
        self.enc_levels = ModuleList(_level_stack(cfg, l, rng, dtype) for l in range(top))
        self.downs = ModuleList(
            Conv2d("strided2x2", C << l, C << (l + 1), rng, dtype) for l in range(top))
        self.bottleneck = _level_stack(cfg, top, rng, dtype)
        self.ups = ModuleList(
            Conv2d("transposed2x2", C << (l + 1), C << l, rng, dtype) for l in range(top))
        self.fuses = ModuleList(
            Conv2d("pointwise1x1", (C << l) * 2, C << l, rng, dtype) for l in range(top))
        self.dec_levels = ModuleList(_level_stack(cfg, l, rng, dtype) for l in range(top))
        # Zero output projection makes a fresh network the exact identity map.
        self.out_conv = Conv2d("plain3x3", C, 3, rng, dtype, zero_init=True)

    def forward_with_features(self, image: Tensor) -> tuple[Tensor, dict[int, Tensor]]:
        """Restore a batch (B, H, W, 3); also return per-level encoder features."""
        if image.ndim != 4 or image.shape[3] != 3:
            raise ShapeError(f"expected (B, H, W, 3) input, got {image.shape}")
        if (image.shape[1], image.shape[2]) != self.cfg.patch_size:
            raise ShapeError(
                f"input {image.shape[1]}x{image.shape[2]} does not match patch size "
                f"{self.cfg.patch_size[0]}x{self.cfg.patch_size[1]}")
        feats: dict[int, Tensor] = {}
        t = _apply_nchw(self.in_conv, image)
        skips = []
        for l, stack in enumerate(self.enc_levels):
            for block in stack:
                t = block(t)
            skips.append(t)
            feats[l] = t
            t = _apply_nchw(self.downs[l], t)
        for block in self.bottleneck:
            t = block(t)
        feats[self.cfg.levels - 1] = t
        for l in range(self.cfg.levels - 2, -1, -1):
            t = _apply_nchw(self.ups[l], t)
            t = cat([skips[l], t], axis=3)
            t = _apply_nchw(self.fuses[l], t)
            for block in self.dec_levels[l]:
                t = block(t)
        residual = _apply_nchw(self.out_conv, t)
        return image + residual, feats

    def __call__(self, image: Tensor) -> Tensor:
        out, _ = self.forward_with_features(image)
        return out


def _apply_nchw(layer: Module, x: Tensor) -> Tensor:
    return layer(x.permute(0, 3, 1, 2)).permute(0, 2, 3, 1)


# ------------------------------------------------------------------ tiled infer


def tiled_infer(net: CuMambaNet, image: np.ndarray, overlap: int = 16) -> np.ndarray:
    """Restore an arbitrary-size (H, W, 3) image by blending patch predictions.

    Tiles of the configured patch size are laid out with the given overlap and
    feathered together with linear ramps, so seam pixels are convex blends of
    the neighboring tile outputs.
    """
    ph, pw = net.cfg.patch_size
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) image, got {image.shape}")
    H, W = image.shape[:2]
    if H < ph or W < pw:
        raise ValueError(
            f"image {H}x{W} is smaller than the {ph}x{pw} patch; pad it up to patch size first")
    if overlap < 0 or overlap >= min(ph, pw) // 2:
        raise ValueError(f"overlap must lie in [0, {min(ph, pw) // 2}), got {overlap}")

    def starts(extent: int, patch: int) -> list[int]:
        stride = patch - overlap if patch - overlap > 0 else patch
        out = list(range(0, max(extent - patch, 0) + 1, stride))
        if out[-1] != extent - patch:
            out.append(extent - patch)
        return sorted(set(out))

    def ramp(patch: int, at_start_edge: bool, at_end_edge: bool) -> np.ndarray:
        w = np.ones(patch, dtype=np.float64)
        if overlap > 0:
            rise = (np.arange(1, overlap + 1)) / (overlap + 1.0)
            if not at_start_edge:
                w[:overlap] = rise
            if not at_end_edge:
                w[-overlap:] = rise[::-1]
        return w

    acc = np.zeros((H, W, 3), dtype=np.float64)
    weight = np.zeros((H, W, 1), dtype=np.float64)
    with no_grad():
        for y0 in starts(H, ph):
            for x0 in starts(W, pw):
                tile = image[y0:y0 + ph, x0:x0 + pw].astype(net.dtype)
                pred = net(Tensor(tile.reshape(1, ph, pw, 3))).data[0]
                wy = ramp(ph, y0 == 0, y0 + ph == H)
                wx = ramp(pw, x0 == 0, x0 + pw == W)
                wmap = (wy[:, None] * wx[None, :])[:, :, None]
                acc[y0:y0 + ph, x0:x0 + pw] += pred.astype(np.float64) * wmap
                weight[y0:y0 + ph, x0:x0 + pw] += wmap
    return (acc / weight).astype(image.dtype)


# ------------------------------------------------------- analytic size estimate


class _Counter:
    def __init__(self):
        self.params: dict[str, int] = {}
        self.flops = 0

    def add(self, kind: str, params: int, flops: int = 0) -> None:
        self.params[kind] = self.params.get(kind, 0) + params
        self.flops += flops

    def total_params(self) -> int:
        return sum(self.params.values())


def _count_conv(c: _Counter, kind: str, cin: int, cout: int, hw: int) -> None:
    taps = {"pointwise1x1": 1, "plain3x3": 9, "depthwise3x3": 9,
            "strided2x2": 4, "transposed2x2": 4}[kind]
    if kind == "depthwise3x3":
        weights = cin * taps
        mults_per_out = taps
    else:
        weights = cin * cout * taps
        mults_per_out = cin * taps
    out_positions = {"pointwise1x1": hw, "plain3x3": hw, "depthwise3x3": hw,
                     "strided2x2": hw // 4, "transposed2x2": hw * 4}[kind]
    c.add(kind, weights + cout, 2 * mults_per_out * cout * out_positions)


def _count_linear(c: _Counter, fin: int, fout: int, tokens: int) -> None:
    c.add("linear", fin * fout + fout, 2 * fin * fout * tokens)


def _count_ssm(c: _Counter, width: int, tokens: int, cfg: CuMambaConfig) -> None:
    inner = cfg.expansion * width
    N = cfg.state_size
    _count_linear(c, width, inner, tokens)          # main branch in
    _count_linear(c, width, inner, tokens)          # gate branch
    c.add("conv1d", inner * cfg.conv_width + inner, 2 * inner * cfg.conv_width * tokens)
    _count_linear(c, inner, inner, tokens)          # step-size projection
    _count_linear(c, inner, N, tokens)              # input projection
    _count_linear(c, inner, N, tokens)              # readout projection
    c.add("scan", inner * N + inner, 8 * tokens * inner * N)
    _count_linear(c, inner, width, tokens)          # out


def _count_block(c: _Counter, cfg: CuMambaConfig, channels: int, hw: int) -> None:
    if not cfg.use_spatial_ssm and not cfg.use_channel_ssm:
        c.add("norm", 2 * channels)
        _count_conv(c, "plain3x3", channels, channels, hw)
        _count_conv(c, "plain3x3", channels, channels, hw)
        return
    if cfg.use_spatial_ssm:
        c.add("norm", 2 * channels)
        _count_conv(c, "pointwise1x1", channels, channels, hw)
        _count_conv(c, "depthwise3x3", channels, channels, hw)
        _count_ssm(c, channels, hw, cfg)
    if cfg.use_channel_ssm:
        c.add("norm", 2 * channels)
        _count_conv(c, "pointwise1x1", channels, channels, hw)
        _count_conv(c, "depthwise3x3", channels, channels, hw)
        _count_ssm(c, hw, channels, cfg)
        _count_conv(c, "depthwise3x3", channels, channels, hw)
        _count_conv(c, "depthwise3x3", channels, channels, hw)


def count_params_by_kind(cfg: CuMambaConfig) -> dict[str, int]:
    c = _count(cfg)
    return dict(c.params)


def count_params_flops(cfg: CuMambaConfig) -> tuple[int, int]:
    """Analytic parameter count and a forward FLOP estimate at patch size.

    Computed from layer dimensions alone (nothing is instantiated), so tests
    can compare it against a walk of a real network's parameter registry.
    """
    c = _count(cfg)
    return c.total_params(), c.flops


def _count(cfg: CuMambaConfig) -> _Counter:
    cfg.validate()
    c = _Counter()
    C = cfg.base_width
    hw0 = cfg.patch_size[0] * cfg.patch_size[1]
    top = cfg.levels - 1
    _count_conv(c, "plain3x3", 3, C, hw0)
    for l in range(top):
        ch, hw = C << l, hw0 >> (2 * l)
        for _ in range(cfg.blocks_per_level[l]):
            _count_block(c, cfg, ch, hw)
        _count_conv(c, "strided2x2", ch, ch * 2, hw)
    ch, hw = C << top, hw0 >> (2 * top)
    for _ in range(cfg.blocks_per_level[top]):
        _count_block(c, cfg, ch, hw)
    for l in range(top - 1, -1, -1):
        ch, hw = C << l, hw0 >> (2 * l)
        _count_conv(c, "transposed2x2", ch * 2, ch, hw // 4)
        _count_conv(c, "pointwise1x1", 2 * ch, ch, hw)
        for _ in range(cfg.blocks_per_level[l]):
            _count_block(c, cfg, ch, hw)
    _count_conv(c, "plain3x3", C, 3, hw0)
    return c
