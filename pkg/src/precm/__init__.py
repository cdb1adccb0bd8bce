"""Padding-based rotation-equivariant convolution on the C4 group."""
from .group import IDENTITY, SIGMA, GroupElement, rotate, rotate_kernel
from .layers import NetConfig, PrecmNet, appendix_e_config, build_net, forward, load_params, save_params
from .padplan import ConvSpec, Padding, PlanError, derive_base_padding, plan_for_mode, rotate_padding
from .conv import conv_sigma

__all__ = [
    "IDENTITY",
    "SIGMA",
    "ConvSpec",
    "GroupElement",
    "NetConfig",
    "Padding",
    "PlanError",
    "PrecmNet",
    "appendix_e_config",
    "build_net",
    "conv_sigma",
    "derive_base_padding",
    "forward",
    "load_params",
    "plan_for_mode",
    "rotate",
    "rotate_kernel",
    "rotate_padding",
    "save_params",
]
