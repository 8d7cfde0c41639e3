"""Integer-factor resampling of (C, H, W) grids."""

import numbers

import numpy as np

from ._validation import check_grid
from .exceptions import InvalidArgumentError

UPSAMPLE_MODES = ("nearest", "bilinear")


def _check_factor(k):
    if isinstance(k, bool) or not isinstance(k, numbers.Integral) or k < 1:
        raise InvalidArgumentError(f"factor must be a positive integer, got {k!r}")
    return int(k)


def upsample(img, k, mode="nearest"):
    """Upsample by an integer factor ``k``.

    ``nearest`` replicates every pixel into a ``k x k`` block. ``bilinear``
    interpolates between pixel centres (half-pixel aligned) and clamps at the
    edges, so constant grids stay constant in both modes.
    """
    img = check_grid(img, "img")
    k = _check_factor(k)
    if k == 1:
        return img.copy()
    if mode == "nearest":
        return img.repeat(k, axis=1).repeat(k, axis=2)
    if mode == "bilinear":
        _, H, W = img.shape
        y0, y1, fy = _bilinear_taps(H, k)
        x0, x1, fx = _bilinear_taps(W, k)
        top = img[:, y0][:, :, x0] * (1 - fx) + img[:, y0][:, :, x1] * fx
        bottom = img[:, y1][:, :, x0] * (1 - fx) + img[:, y1][:, :, x1] * fx
        return top * (1 - fy)[:, None] + bottom * fy[:, None]
    raise InvalidArgumentError(f"unknown upsample mode {mode!r}; expected one of {UPSAMPLE_MODES}")


def _bilinear_taps(n, k):
    pos = np.clip((np.arange(n * k) + 0.5) / k - 0.5, 0, n - 1)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, n - 1)
    return lo, hi, pos - lo


def box_downsample(img, k):
    """Average non-overlapping ``k x k`` blocks; H and W must be divisible by ``k``."""
    img = check_grid(img, "img")
    k = _check_factor(k)
    C, H, W = img.shape
    if H % k or W % k:
        raise InvalidArgumentError(f"grid {H}x{W} not divisible by {k}")
    return img.reshape(C, H // k, k, W // k, k).mean(axis=(2, 4))
