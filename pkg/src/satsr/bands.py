"""Spectral band bookkeeping for six-band surface-reflectance patches.

Band order is fixed across the whole package: Blue, Green, Red, NIR,
SWIR1, SWIR2 along the last axis of (H, W, 6) arrays.  The model operates
on two three-band stacks, an RGB stack ordered (Red, Green, Blue) and an
IR stack ordered (NIR, SWIR1, SWIR2); the helpers here are the only place
the index mapping lives.
"""

from __future__ import annotations

import numpy as np

BAND_NAMES = ("blue", "green", "red", "nir", "swir1", "swir2")

# Positions inside the canonical 6-band layout.
BLUE, GREEN, RED, NIR, SWIR1, SWIR2 = range(6)

# Stack definitions: index into the 6-band axis, in stack order.
RGB_BANDS = (RED, GREEN, BLUE)
IR_BANDS = (NIR, SWIR1, SWIR2)

# Radar backscatter handling: values live in decibels inside containers and
# are squashed to [0, 1] before entering any network.
SAR_DB_MIN = -50.0
SAR_DB_MAX = 10.0


def band_split(patch: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split a (H, W, 6) patch into (rgb, ir) stacks of shape (H, W, 3).

    The RGB stack is ordered (Red, Green, Blue) and the IR stack
    (NIR, SWIR1, SWIR2).  Raises ValueError on any other band count.
    """
    if patch.ndim != 3 or patch.shape[-1] != 6:
        raise ValueError(f"expected (H, W, 6) patch, got shape {patch.shape}")
    rgb = patch[..., list(RGB_BANDS)]
    ir = patch[..., list(IR_BANDS)]
    return rgb, ir


def band_merge(rgb: np.ndarray, ir: np.ndarray) -> np.ndarray:
    """Inverse of band_split: reassemble the canonical (H, W, 6) layout."""
    if rgb.shape != ir.shape or rgb.ndim != 3 or rgb.shape[-1] != 3:
        raise ValueError(
            f"expected matching (H, W, 3) stacks, got {rgb.shape} and {ir.shape}"
        )
    merged = np.empty(rgb.shape[:2] + (6,), dtype=rgb.dtype)
    merged[..., RED] = rgb[..., 0]
    merged[..., GREEN] = rgb[..., 1]
    merged[..., BLUE] = rgb[..., 2]
    merged[..., NIR] = ir[..., 0]
    merged[..., SWIR1] = ir[..., 1]
    merged[..., SWIR2] = ir[..., 2]
    return merged


def normalize_sar(sar_db: np.ndarray) -> np.ndarray:
    """Map backscatter in dB to [0, 1], clipping to the [-50, 10] range."""
    clipped = np.clip(sar_db, SAR_DB_MIN, SAR_DB_MAX)
    return (clipped - SAR_DB_MIN) / (SAR_DB_MAX - SAR_DB_MIN)
