"""Multispectral image codec with pel-recursive inter-band prediction."""

from .codec import decode_cube, encode_cube, lambda_of_qp, order_bands
from .cube_io import Plane, SpectralCube, load_cube, store_cube, synthesize_correlated_cube
from .metrics import RDCurve, RDPoint, bd_rate, psnr, ssim

__all__ = [
    "Plane", "RDCurve", "RDPoint", "SpectralCube", "bd_rate", "decode_cube",
    "encode_cube", "lambda_of_qp", "load_cube", "order_bands", "psnr", "ssim",
    "store_cube", "synthesize_correlated_cube",
]

__version__ = "0.1.0"
