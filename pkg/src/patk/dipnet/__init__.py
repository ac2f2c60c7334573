"""Untrained-network reconstruction engine (deep image prior)."""

from .engine import (DipConfig, dip_loss, dip_loss_grad, dip_reconstruct,
                     dip_reconstruct_all, select_iterate)
from .optim import AdamState, adam_step, cosine_lr
from .unet import (
    HEADS,
    LEAKY_SLOPE,
    NetworkParams,
    UNetConfig,
    parameter_count,
    unet_forward,
    unet_init,
    unet_vjp,
)

__all__ = [
    "DipConfig",
    "dip_loss",
    "dip_loss_grad",
    "dip_reconstruct",
    "dip_reconstruct_all",
    "select_iterate",
    "AdamState",
    "adam_step",
    "cosine_lr",
    "HEADS",
    "LEAKY_SLOPE",
    "NetworkParams",
    "UNetConfig",
    "parameter_count",
    "unet_forward",
    "unet_init",
    "unet_vjp",
]
