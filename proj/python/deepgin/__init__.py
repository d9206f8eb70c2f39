"""Python bindings for the DeepGIN inpainting core.

Images are float arrays of shape (H, W, C) with values in [0, 1]; masks
are uint8 arrays of shape (H, W) with 1 marking a missing pixel.
"""

from ._core import (
    PSNR_CAP,
    ArgumentError,
    CapabilityError,
    Config,
    ConfigError,
    Error,
    FormatError,
    GenerationError,
    IncompatibleCheckpointError,
    IoError,
    Model,
    NonFiniteError,
    Trainer,
    component_params,
    composite,
    evaluate_dataset,
    extract_features,
    generate_mask,
    hole_fraction,
    load_png,
    lr_at,
    mean_l1_pct,
    psnr,
    resize_bilinear,
    run_cli,
    save_png,
    ssim,
    tile_decompose,
    tile_regroup,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
