"""Training objective: smooth-L1 pixel term plus a frequency-domain L1 term."""

from __future__ import annotations

from dataclasses import dataclass

from .fft import dft2
from .tensor import ShapeError, Tensor


@dataclass
class LossConfig:
    charbonnier_eps: float = 1e-3
    fourier_weight: float = 0.1

    def validate(self) -> "LossConfig":
        if self.charbonnier_eps <= 0:
            raise ValueError("charbonnier_eps must be positive")
        if self.fourier_weight < 0:
            raise ValueError("fourier_weight must be non-negative")
        return self


def _check_same_shape(pred: Tensor, target: Tensor) -> None:
    if pred.shape != target.shape:
        raise ShapeError(f"loss operands differ in shape: {pred.shape} vs {target.shape}")


def charbonnier(pred: Tensor, target: Tensor, eps: float = 1e-3) -> Tensor:
    """mean sqrt(d^2 + eps) over all elements; smooth everywhere, >= sqrt(eps)."""
    _check_same_shape(pred, target)
    diff = pred - target
    return ((diff * diff) + eps).sqrt().mean()


def fourier_l1(pred: Tensor, target: Tensor) -> Tensor:
    """Mean |dRe| + |dIm| over all frequency bins and channels.

    Expects (..., H, W, C) images; the transform runs over the spatial axes.
    The transform is linear, so the difference is transformed once.
    """
    _check_same_shape(pred, target)
    diff = pred - target
    if diff.ndim >= 3:
        # (..., H, W, C) -> (..., C, H, W)
        nd = diff.ndim
        axes = tuple(range(nd - 3)) + (nd - 1, nd - 3, nd - 2)
        diff = diff.permute(*axes)
    spec = dft2(diff)
    return spec.real.abs().mean() + spec.imag.abs().mean()


def restoration_loss(pred: Tensor, target: Tensor, cfg: LossConfig) -> Tensor:
    loss = charbonnier(pred, target, cfg.charbonnier_eps)
    if cfg.fourier_weight > 0:
        loss = loss + cfg.fourier_weight * fourier_l1(pred, target)
    return loss
