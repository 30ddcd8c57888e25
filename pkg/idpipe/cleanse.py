"""Double-step background cleaning ahead of segmentation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .raster import BinaryImage, GrayImage, adaptive_binarize, gaussian_blur, normalize, otsu_threshold, to_uint8


@dataclass(frozen=True)
class CleanParams:
    window: int = 25
    offset: int = 10
    blur_sigma: float = 2.0
    passes: int = 2
    sharpen_amount: float = 0.5

    def __post_init__(self) -> None:
        if self.passes < 1:
            raise ParameterError(f"Cleaning passes must be >= 1, got {self.passes}.")
        if self.window < 3 or self.window % 2 == 0:
            raise ParameterError(f"Cleaning window must be odd and >= 3, got {self.window}.")
        if self.blur_sigma <= 0:
            raise ParameterError(f"Cleaning blur sigma must be positive, got {self.blur_sigma}.")
        if self.sharpen_amount < 0:
            raise ParameterError(f"Sharpen amount must be >= 0, got {self.sharpen_amount}.")


def background_mask(img: GrayImage, p: CleanParams) -> BinaryImage:
    """Background 255, strokes 0.

    A stroke pixel is darker than its local mean by more than the offset and
    also below the global Otsu cut of the normalized image; the second test
    keeps the troughs of a background texture out of the stroke class.
    """
    g = normalize(img)
    local = adaptive_binarize(g, p.window, p.offset).mask
    dark = g.data <= otsu_threshold(g.data)
    return BinaryImage.from_mask(local | ~dark)


def clean_pass(img: GrayImage, p: CleanParams) -> GrayImage:
    if int(img.data.min()) == int(img.data.max()):
        return img
    mask = background_mask(img, p)
    soft = gaussian_blur(mask, p.blur_sigma).data.astype(np.float64) / 255.0
    src = img.data.astype(np.float64)
    whitened = to_uint8(src * (1.0 - soft) + 255.0 * soft)
    return GrayImage(np.where(mask.mask, whitened, img.data))


def clean_background(img: GrayImage, p: CleanParams = CleanParams()) -> GrayImage:
    """
    Pulls the background toward white while keeping dark strokes.

    Each pass builds the background mask, blurs it into a soft weight ``m``
    in 0..1 and replaces every background pixel by
    ``round(img * (1 - m) + 255 * m)``; stroke pixels are kept as they are.
    No pixel ever gets darker. Constant images are returned unchanged.
    """
    for _ in range(p.passes):
        img = clean_pass(img, p)
    return img


def sharpen(img: GrayImage, amount: float) -> GrayImage:
    """Unsharp mask: ``clamp(img + amount * (img - gaussian_blur(img, 1.0)))``."""
    if amount < 0:
        raise ParameterError(f"Sharpen amount must be >= 0, got {amount}.")
    if amount == 0:
        return img
    src = img.data.astype(np.float64)
    blurred = gaussian_blur(img, 1.0).data.astype(np.float64)
    return GrayImage(to_uint8(src + amount * (src - blurred)))
