"""Unsupervised multi-image-to-image translation.

A forward generator fuses n paired source modalities into one target image; a
reverse generator maps a target image back to all n sources. Both are trained
with patch discriminators under adversarial, latent-consistency and
cycle-consistency objectives.
"""

from .core import (Config, ConfigError, DataConfig, DomainSpec, ModalitySpec, ModelConfig,
                   TrainConfig, load_config, save_config)
from .generator import ForwardGenerator, ReverseGenerator, build_generators
from .discriminator import PatchDiscriminator, build_discriminator_bank
from .losses import LossReport, total_loss
from .metrics import psnr, ssim

__version__ = "0.1.0"

__all__ = [
    "Config", "ConfigError", "DataConfig", "DomainSpec", "ModalitySpec", "ModelConfig",
    "TrainConfig", "load_config", "save_config", "ForwardGenerator", "ReverseGenerator",
    "build_generators", "PatchDiscriminator", "build_discriminator_bank", "LossReport",
    "total_loss", "psnr", "ssim",
]
