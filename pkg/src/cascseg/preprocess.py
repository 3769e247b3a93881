"""Micrograph normalization: enhancement, background whitening, denoising."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .raster import as_image, as_mask, hsv_to_rgb, rgb_to_hsv


@dataclass
class PreprocessConfig:
    """Knobs for :func:`enhance` and :func:`denoise`.

    ``whiten_v_min`` may be set to 256 to disable background whitening.
    """

    brightness_delta: int = 0
    contrast_gain: float = 1.2
    saturation_gain: float = 1.3
    whiten_s_max: int = 25
    whiten_v_min: int = 200
    denoise_min_area: int = 30

    def validate(self) -> "PreprocessConfig":
        if not -255 <= self.brightness_delta <= 255:
            raise ValueError("brightness_delta out of range")
        if self.contrast_gain <= 0:
            raise ValueError("contrast_gain must be > 0")
        if self.saturation_gain < 0:
            raise ValueError("saturation_gain must be >= 0")
        if not 0 <= self.whiten_s_max <= 255:
            raise ValueError("whiten_s_max out of range")
        if not 0 <= self.whiten_v_min <= 256:
            raise ValueError("whiten_v_min out of range")
        if self.denoise_min_area < 0:
            raise ValueError("denoise_min_area must be >= 0")
        return self


def enhance(img, cfg: PreprocessConfig) -> np.ndarray:
    """Contrast/brightness in RGB, saturation in HSV, then background whitening.

    Any pixel with saturation <= whiten_s_max and value >= whiten_v_min is
    replaced by pure white. Deterministic; idempotent on whitened pixels.
    """
    img = as_image(img)
    cfg.validate()
    out = img.astype(np.float64) * cfg.contrast_gain + cfg.brightness_delta
    np.clip(out, 0, 255, out=out)
    if cfg.saturation_gain != 1.0:
        hsv = rgb_to_hsv(out)
        hsv[..., 1] = np.clip(hsv[..., 1] * cfg.saturation_gain, 0, 255)
        out = np.clip(hsv_to_rgb(hsv), 0, 255)
    hsv = rgb_to_hsv(out)
    white = (hsv[..., 1] <= cfg.whiten_s_max) & (hsv[..., 2] >= cfg.whiten_v_min)
    out = np.rint(out).astype(np.uint8)
    out[white] = 255
    return out


def foreground_mask(img) -> np.ndarray:
    """Pixels that are not pure white (the erased/whitened background color)."""
    img = as_image(img)
    return (img != 255).any(axis=2)


def denoise(mask, min_area: int) -> np.ndarray:
    """Drop connected components (8-connectivity) smaller than ``min_area``."""
    if min_area < 0:
        raise ValueError("min_area must be >= 0")
    mask = as_mask(mask)
    if min_area == 0 or not mask.any():
        return mask.copy()
    labels, count = ndimage.label(mask, structure=np.ones((3, 3), bool))
    areas = np.bincount(labels.ravel())
    keep = areas >= min_area
    keep[0] = False
    return keep[labels]


def denoise_image(img, min_area: int) -> np.ndarray:
    """Whiten foreground components smaller than ``min_area`` in an image."""
    img = as_image(img)
    fg = foreground_mask(img)
    kept = denoise(fg, min_area)
    out = img.copy()
    out[fg & ~kept] = 255
    return out
