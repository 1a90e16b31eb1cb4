"""SSIM and level-weighted SSIM as differentiable reconstruction losses."""

from .image_io import Image, SyntheticSpec, load_image, save_image, synthesize
from .metrics import (
    LevelBank,
    MetricReport,
    SsimConfig,
    lwssim,
    lwssim_level,
    lwssim_loss,
    mae,
    metric_report,
    mse,
    ssim,
)
from .grad import grad_fd, grad_lwssim, grad_lwssim_loss, grad_mse, grad_ssim

__version__ = "0.1.0"
