"""Helpers shared by the LFCR and VDSR model definitions."""

from __future__ import annotations

import numpy as np


def he_normal(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int,
              dtype=np.float32) -> np.ndarray:
    """Fan-in scaled normal init: std = sqrt(2 / fan_in)."""
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)


def param_count(model) -> int:
    """Number of trainable scalars (fixed kernels excluded)."""
    return int(sum(p.data.size for _, p in model.named_parameters()))


def as_batch(images: np.ndarray) -> tuple[np.ndarray, bool]:
    """Coerce (H,W) or (B,H,W) image arrays to (B,1,H,W); flag single-image input."""
    arr = np.asarray(images)
    if arr.dtype.kind in "ui":
        arr = arr.astype(np.float32)
    if arr.ndim == 2:
        return arr[None, None], True
    if arr.ndim == 3:
        return arr[:, None], False
    raise ValueError(f"expected (H,W) or (B,H,W) images, got shape {arr.shape}")


def from_batch(batch: np.ndarray, single: bool) -> np.ndarray:
    return batch[0, 0] if single else batch[:, 0]


def to_dtype_params(model, dtype) -> None:
    """Convert every trainable parameter buffer in place."""
    for _, p in model.named_parameters():
        p.data = p.data.astype(dtype)
