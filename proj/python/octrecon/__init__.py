"""Undersampled swept-source OCT reconstruction: numpy bindings to the C++ core."""

import json as _json

from . import _core
from ._core import (
    BScan,
    DegenerateError,
    FormatError,
    NumericError,
    ShapeError,
    UNet,
    Volume,
    dft,
    hann_window,
    idft,
    kept_indices,
    mse,
    prepare_for_metrics,
    psnr,
    psnr_from_mse,
    read_image,
    read_volume,
    reconstruct_aline_full,
    reconstruct_aline_undersampled,
    reconstruct_volume,
    reinterpolate,
    run_cli,
    ssim,
    write_image,
    write_volume,
)


def generate_phantom(spec):
    """Simulate a spectral volume. `spec` is a dict or a JSON string."""
    if not isinstance(spec, str):
        spec = _json.dumps(spec)
    return _core.generate_phantom(spec)


__all__ = [name for name in dir() if not name.startswith("_")]
