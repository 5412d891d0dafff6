"""cumamba: a CPU implementation of a channel-aware selective state-space
U-Net for image restoration, built on a small numpy tape-autodiff core."""

__version__ = "0.1.0"

from .config import CuMambaConfig, DataConfig, RunConfig, TrainConfig
from .losses import LossConfig, charbonnier, fourier_l1, restoration_loss
from .metrics import psnr, ssim
from .ssm import (SelectiveSSM, SsmParams, discretize, scan_parallel,
                  scan_sequential, select_params, ssm_scan)
from .tensor import Tensor, no_grad
from .unet import CuMambaNet, count_params_flops, tiled_infer

__all__ = [
    "CuMambaConfig", "CuMambaNet", "DataConfig", "LossConfig", "RunConfig",
    "SelectiveSSM", "SsmParams", "Tensor", "TrainConfig", "charbonnier",
    "count_params_flops", "discretize", "fourier_l1", "no_grad", "psnr",
    "restoration_loss", "scan_parallel", "scan_sequential", "select_params",
    "ssim", "ssm_scan", "tiled_infer",
]
