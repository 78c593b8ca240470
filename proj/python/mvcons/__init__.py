"""Multi-view consistent diffusion on synthetic scenes.

Arrays are float64 numpy arrays in channel-first layout: images [3, H, W],
latents [12, H/2, W/2], depths [H, W].
"""

from ._mvcons import (
    CameraPose,
    ConfigError,
    Error,
    HashMismatchError,
    InvalidValueError,
    IoError,
    NoiseSchedule,
    NonFiniteError,
    Scene,
    ShapeError,
    attention,
    config_hash,
    ddim_step,
    ddim_timesteps,
    default_config,
    evaluate,
    gen_data,
    latent_decode,
    latent_encode,
    ms_ssim,
    project,
    psnr,
    q_sample,
    render,
    reprojection_consistency,
    sample,
    smoke_config,
    ssim,
    train,
    unproject,
)

__all__ = [name for name in dir() if not name.startswith("_")]
