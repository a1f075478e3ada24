from __future__ import annotations

import numpy as np
from PIL import Image

from .types import GROUND_SIZE


def resize_ground_image(pixels: np.ndarray, size: int = GROUND_SIZE) -> np.ndarray:
    """Bilinear resize of an RGB uint8 image to ``size`` x ``size``."""
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise ValueError(f"expected HxWx3 image, got {pixels.shape}")
    if pixels.shape[:2] == (size, size):
        return np.ascontiguousarray(pixels, dtype=np.uint8)
    im = Image.fromarray(np.ascontiguousarray(pixels, dtype=np.uint8), "RGB")
    return np.asarray(im.resize((size, size), Image.Resampling.BILINEAR), dtype=np.uint8).copy()
