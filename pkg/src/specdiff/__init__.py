"""Diffusion restoration in the spectral space of a linear degradation operator."""

from .linops import (
    SvdOperator,
    build_bicubic_sr,
    build_block_sr,
    build_colorization,
    build_denoising,
    build_inpainting,
    build_sep_blur,
    from_matrix,
)
from .schedule import SigmaSchedule, to_vp_alpha, ve_to_vp, vp_to_ve
from .denoiser import BridgeDenoiser, GaussianDenoiser, GmmDenoiser
from .sampler import DdrmParams, ProblemInstance, eta_b_theorem, run

__version__ = "0.1.0"

__all__ = [
    "SvdOperator",
    "build_bicubic_sr",
    "build_block_sr",
    "build_colorization",
    "build_denoising",
    "build_inpainting",
    "build_sep_blur",
    "from_matrix",
    "SigmaSchedule",
    "to_vp_alpha",
    "ve_to_vp",
    "vp_to_ve",
    "GaussianDenoiser",
    "GmmDenoiser",
    "BridgeDenoiser",
    "DdrmParams",
    "ProblemInstance",
    "eta_b_theorem",
    "run",
    "__version__",
]
