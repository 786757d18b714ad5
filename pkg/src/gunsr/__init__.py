"""Gradual upsampling network for single-image super-resolution (numpy)."""
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ConfigError, RunConfig
from .data import DataError, algd, build_curriculum, extract_patches
from .metrics import psnr, ssim
from .network import (GunModel, GunTopology, build_gun, flops_estimate, gun_backward,
                      gun_forward, resolution_schedule)
from .resample import bicubic_adjoint, bicubic_resize, degrade
from .training import NumericError, TrainConfig, train_curriculum

__version__ = "0.1.0"

__all__ = [
    "CheckpointError", "ConfigError", "DataError", "GunModel", "GunTopology", "NumericError",
    "RunConfig", "TrainConfig", "algd", "bicubic_adjoint", "bicubic_resize",
    "build_curriculum", "build_gun", "degrade", "extract_patches", "flops_estimate",
    "gun_backward", "gun_forward", "load_checkpoint", "psnr", "resolution_schedule",
    "save_checkpoint", "ssim", "train_curriculum",
]
