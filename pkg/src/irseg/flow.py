"""Dense weighted Lucas-Kanade optical flow.

Each pixel solves a small least-squares problem over its neighborhood,
weighting the brightness-constancy equations with a Gaussian window so that
the center dominates.  A Tikhonov term keeps the 2x2 structure tensor
invertible on textureless regions (constant patches yield zero motion, not
NaN).

Conventions: ``flow[..., 0]`` is the column (x) velocity and
``flow[..., 1]`` the row (y) velocity, in pixels/frame, describing the motion
of image content from ``prev`` to ``cur``.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .errors import UsageError


def _gaussian_kernel(window: int, sigma: float) -> np.ndarray:
    half = window // 2
    x = np.arange(-half, half + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def optical_flow(prev: np.ndarray, cur: np.ndarray, *, window: int = 9,
                 weight_sigma: float = 2.0, eps: float = 1e-4) -> np.ndarray:
    """Estimate dense flow from ``prev`` to ``cur``.

    Parameters
    ----------
    window : odd window size >= 3 over which equations are aggregated.
    weight_sigma : std-dev (pixels) of the Gaussian aggregation weights.
    eps : Tikhonov damping added to the structure tensor diagonal.
    """
    prev = np.asarray(prev, dtype=np.float64)
    cur = np.asarray(cur, dtype=np.float64)
    if prev.shape != cur.shape:
        raise UsageError(f"frame shapes differ: {prev.shape} vs {cur.shape}")
    if prev.ndim != 2:
        raise UsageError("optical flow expects 2-D images")
    if window < 3 or window % 2 == 0:
        raise UsageError(f"window must be odd and >= 3, got {window}")
    if weight_sigma <= 0 or eps <= 0:
        raise UsageError("weight_sigma and eps must be positive")

    # central-difference gradients of the temporal mean; plain frame difference
    # for the temporal derivative.
    mean = 0.5 * (prev + cur)
    gy, gx = np.gradient(mean)
    gt = cur - prev

    kernel = _gaussian_kernel(window, weight_sigma)

    def aggregate(img: np.ndarray) -> np.ndarray:
        tmp = ndimage.correlate1d(img, kernel, axis=0, mode="nearest")
        return ndimage.correlate1d(tmp, kernel, axis=1, mode="nearest")

    sxx = aggregate(gx * gx) + eps
    syy = aggregate(gy * gy) + eps
    sxy = aggregate(gx * gy)
    sxt = aggregate(gx * gt)
    syt = aggregate(gy * gt)

    det = sxx * syy - sxy * sxy
    u = (-sxt * syy + sxy * syt) / det
    v = (sxy * sxt - syt * sxx) / det
    return np.stack((u, v), axis=-1)


def zero_flow(shape: tuple[int, int]) -> np.ndarray:
    """The all-zero velocity field (used for the first frame of a sequence)."""
    return np.zeros(shape + (2,), dtype=np.float64)
