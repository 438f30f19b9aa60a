"""Bicubic resampling used both as model input prep and as the baseline.

Separable Catmull-Rom interpolation (cubic convolution with a = -0.5),
center-aligned grids, edge rows/columns clamped.  Only integer upscale
factors are supported; factor 1 reproduces the input exactly.
"""

from __future__ import annotations

import numpy as np

_A = -0.5  # Catmull-Rom coefficient


def cubic_kernel(x: np.ndarray) -> np.ndarray:
    """Cubic convolution kernel with support [-2, 2].

    W(0) = 1, W(k) = 0 at other integers, and the four taps covering any
    sample position sum to exactly 1.
    """
    x = np.abs(np.asarray(x, dtype=np.float64))
    x2 = x * x
    x3 = x2 * x
    out = np.zeros_like(x)
    near = x <= 1.0
    far = (x > 1.0) & (x < 2.0)
    out[near] = ((_A + 2.0) * x3 - (_A + 3.0) * x2 + 1.0)[near]
    out[far] = (_A * x3 - 5.0 * _A * x2 + 8.0 * _A * x - 4.0 * _A)[far]
    return out


def _axis_taps(n_in: int, factor: int) -> tuple[np.ndarray, np.ndarray]:
    """Per output index: 4 clamped source indices and their kernel weights.

    Output position i maps to source coordinate (i + 0.5) / factor - 0.5,
    so the two grids share their geometric center.
    """
    n_out = n_in * factor
    src = (np.arange(n_out, dtype=np.float64) + 0.5) / factor - 0.5
    base = np.floor(src).astype(np.int64)
    idx = base[:, None] + np.arange(-1, 3)[None, :]
    weights = cubic_kernel(src[:, None] - idx)
    idx = np.clip(idx, 0, n_in - 1)
    return idx, weights


def bicubic_upsample(image: np.ndarray, factor: int) -> np.ndarray:
    """Upscale (H, W) or (H, W, C) by an integer factor, float64 output."""
    if not isinstance(factor, (int, np.integer)) or factor < 1:
        raise ValueError(f"factor must be a positive integer, got {factor!r}")
    if image.ndim not in (2, 3):
        raise ValueError(f"expected (H, W) or (H, W, C) image, got {image.shape}")
    out = np.asarray(image, dtype=np.float64)
    for axis in (0, 1):
        idx, weights = _axis_taps(out.shape[axis], int(factor))
        gathered = np.take(out, idx, axis=axis)
        # gathered has the 4-tap axis right after `axis`; contract it away
        shape = [1] * gathered.ndim
        shape[axis] = weights.shape[0]
        shape[axis + 1] = 4
        out = (gathered * weights.reshape(shape)).sum(axis=axis + 1)
    return out
