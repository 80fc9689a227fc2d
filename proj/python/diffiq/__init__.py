"""Differentiable image-quality metrics, attacks and analysis."""

from ._core import (  # noqa: F401
    ConfigError,
    FormatError,
    IoError,
    NumericError,
    ShapeError,
    adm,
    brightness_curve,
    clahe,
    compression_proxy,
    edge_mask,
    epsilon_for_psnr,
    features,
    fused_score,
    gamma_correct,
    gradient_suite,
    init_noise,
    mse,
    pgd_attack,
    power_spectrum,
    psnr,
    psnr_bounded_attack,
    read_image,
    restore,
    score_and_gradient,
    spectral_slope,
    synthetic_scene,
    unsharp_mask,
    vif_min_side,
    vif_scale,
    write_image,
)

__version__ = "0.1.0"
