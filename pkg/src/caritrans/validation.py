"""Input validation helpers shared by the estimator, losses and networks."""

import numpy as np
import torch

from .exceptions import BadSize, ShapeMismatch


def check_image_batch(images, size=None, dtype=torch.float32):
    """Coerce an image batch to a float tensor ``[N, 3, H, W]`` in [-1, 1].

    Accepts either a float array/tensor already channels-first in [-1, 1], or
    an 8-bit array ``[N, H, W, 3]`` (or a single ``[H, W, 3]`` image), which is
    mapped linearly from [0, 255].
    """
    if isinstance(images, torch.Tensor):
        t = images
    else:
        arr = np.asarray(images)
        if arr.dtype == np.uint8:
            if arr.ndim == 3:
                arr = arr[None]
            if arr.ndim != 4 or arr.shape[-1] != 3:
                raise ShapeMismatch(f"expected 8-bit [N, H, W, 3] images, got {arr.shape}")
            arr = arr.transpose(0, 3, 1, 2).astype(np.float32) / 127.5 - 1.0
        t = torch.from_numpy(np.ascontiguousarray(arr))
    if t.ndim == 3:
        t = t.unsqueeze(0)
    if t.ndim != 4 or t.shape[1] != 3:
        raise ShapeMismatch(f"expected [N, 3, H, W] images, got {tuple(t.shape)}")
    if t.shape[0] == 0:
        raise ShapeMismatch("empty image batch")
    t = t.to(dtype)
    if not torch.isfinite(t).all():
        raise ValueError("image batch contains non-finite values")
    if t.min() < -1.0 - 1e-6 or t.max() > 1.0 + 1e-6:
        raise ValueError("float images must lie in [-1, 1]")
    if size is not None and tuple(t.shape[-2:]) != (size, size):
        raise ShapeMismatch(f"expected {size}x{size} images, got {tuple(t.shape[-2:])}")
    return t


def check_same_shape(*pairs):
    for a, b in pairs:
        if a.shape != b.shape:
            raise ShapeMismatch(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")


def check_image_size(size):
    if int(size) != size or size < 16 or size % 2:
        raise BadSize(f"image size must be an even integer >= 16, got {size}")
    return int(size)
