"""Input checks shared by the estimator front-end."""
from __future__ import annotations

import numpy as np

from .errors import ConfigError, DimensionError


def check_images(X, image_size: int | None = None) -> np.ndarray:
    """Stack of RGB images -> float64 (N, H, W, 3) with values in [0, 1]."""
    arr = np.asarray(X)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4 or arr.shape[-1] != 3:
        raise DimensionError(f"expected images of shape (N, H, W, 3), got {arr.shape}")
    if arr.shape[1] != arr.shape[2]:
        raise DimensionError(f"images must be square, got {arr.shape[1]}x{arr.shape[2]}")
    if image_size is not None and arr.shape[1] != image_size:
        raise DimensionError(f"images are {arr.shape[1]}px, model expects {image_size}px")
    if arr.dtype == np.uint8:
        arr = arr / 255.0
    arr = arr.astype(np.float64, copy=False)
    if not np.all(np.isfinite(arr)):
        raise ConfigError("images contain NaN or Inf")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ConfigError("float images must lie in [0, 1]")
    return arr


def check_masks(y, n: int, size: int) -> np.ndarray:
    arr = np.asarray(y)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.shape != (n, size, size):
        raise DimensionError(f"expected masks of shape {(n, size, size)}, got {arr.shape}")
    values = np.unique(arr)
    if not np.all(np.isin(values, (0, 1))) and arr.dtype != bool:
        if arr.dtype == np.uint8 and np.all(np.isin(values, (0, 255))):
            return arr > 127
        raise ConfigError("masks must be binary (bool, 0/1 or 0/255)")
    return arr.astype(bool)


def check_captions(captions, n: int, shape: tuple) -> np.ndarray:
    arr = np.asarray(captions, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.shape != (n, *shape):
        raise DimensionError(f"expected captions of shape {(n, *shape)}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ConfigError("captions contain NaN or Inf")
    return arr
