"""Seeded synthetic scene generation.

Scenes are Voronoi mosaics of agricultural-looking fields: piecewise
constant six-band reflectance per field, a smooth elevation surface, a
per-field land-cover code, and radar backscatter derived from field
roughness plus seeded speckle.  The paired low-resolution patch comes from
an explicit degradation operator (block mean, decimation, additive noise)
so tests can reason about it in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .container import N_LANDCOVER, SCALE_FACTOR, SamplePair

# Per-class base reflectance (Blue, Green, Red, NIR, SWIR1, SWIR2), loosely
# patterned on growing-season surface reflectance.  Index = land-cover code.
CLASS_SPECTRA = np.array(
    [
        [0.06, 0.05, 0.04, 0.02, 0.01, 0.01],  # water
        [0.04, 0.06, 0.04, 0.45, 0.18, 0.09],  # trees
        [0.06, 0.09, 0.07, 0.38, 0.22, 0.12],  # grass
        [0.05, 0.07, 0.06, 0.25, 0.10, 0.05],  # flooded vegetation
        [0.05, 0.08, 0.06, 0.50, 0.20, 0.10],  # crops
        [0.07, 0.09, 0.09, 0.28, 0.24, 0.16],  # shrub and scrub
        [0.18, 0.19, 0.20, 0.24, 0.26, 0.24],  # built
        [0.16, 0.20, 0.24, 0.30, 0.38, 0.32],  # bare
        [0.85, 0.82, 0.78, 0.65, 0.20, 0.12],  # snow and ice
    ]
)

# Cropland-heavy class prior for field assignment.
_CLASS_PRIOR = np.array([0.06, 0.14, 0.12, 0.02, 0.30, 0.10, 0.08, 0.12, 0.06])

# Radar backscatter offsets per land-cover class, dB relative to the
# roughness-driven base level.
_SAR_CLASS_OFFSET = np.array([-12.0, 2.0, 0.0, -4.0, 0.0, 0.0, 6.0, 1.0, -6.0])


@dataclass
class SynthConfig:
    lr_size: int = 64
    field_count: int = 12
    relief: float = 120.0
    spectral_jitter: float = 0.04
    # heavy sensor noise: the regime where learned restoration separates
    # from naive interpolation
    noise_sigma: float = 0.25
    sar_speckle_db: float = 1.5

    @property
    def hr_size(self) -> int:
        return self.lr_size * SCALE_FACTOR


def degrade(hr: np.ndarray, factor: int, noise_sigma: float = 0.0,
            rng: np.random.Generator | None = None) -> np.ndarray:
    """Block-mean + decimate + optional additive Gaussian noise, float64.

    Purely affine: no clipping happens here, so degrade(x + c) equals
    degrade(x) + c when the same noise is drawn.  Callers clip afterwards
    if they need valid reflectance.
    """
    hr = np.asarray(hr, dtype=np.float64)
    H, W = hr.shape[:2]
    if H % factor or W % factor:
        raise ValueError(f"image size {(H, W)} not divisible by factor {factor}")
    h, w = H // factor, W // factor
    blocked = hr.reshape((h, factor, w, factor) + hr.shape[2:])
    lr = blocked.mean(axis=(1, 3))
    if noise_sigma > 0.0:
        if rng is None:
            raise ValueError("noise_sigma > 0 requires an rng")
        lr = lr + rng.normal(0.0, noise_sigma, size=lr.shape)
    return lr


def _field_map(rng: np.random.Generator, size: int, field_count: int) -> np.ndarray:
    """Nearest-center (Voronoi) field id per pixel, shape (size, size)."""
    centers = rng.uniform(0.0, size, size=(field_count, 2))
    yy, xx = np.mgrid[0:size, 0:size]
    d2 = (yy[..., None] - centers[:, 0]) ** 2 + (xx[..., None] - centers[:, 1]) ** 2
    return np.argmin(d2, axis=-1)


def _smooth_dem(rng: np.random.Generator, size: int, relief: float) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    base = rng.uniform(200.0, 1500.0)
    slope = rng.normal(0.0, 0.15, size=2)
    dem = base + slope[0] * yy + slope[1] * xx
    for _ in range(4):
        cy, cx = rng.uniform(0.0, size, size=2)
        sigma = rng.uniform(0.15 * size, 0.45 * size)
        amp = rng.normal(0.0, relief / 2.0)
        dem += amp * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * sigma**2))
    return dem


def synth_scene(seed: int, config: SynthConfig | None = None) -> SamplePair:
    """Generate one fully populated sample from a seed, deterministically."""
    config = config or SynthConfig()
    rng = np.random.default_rng(seed)
    size = config.hr_size

    fields = _field_map(rng, size, config.field_count)
    field_class = rng.choice(N_LANDCOVER, size=config.field_count, p=_CLASS_PRIOR)
    jitter = rng.normal(0.0, config.spectral_jitter,
                        size=(config.field_count, 6))
    spectra = np.clip(CLASS_SPECTRA[field_class] + jitter, 0.01, 0.99)
    hr = spectra[fields]  # piecewise constant per field

    dem = _smooth_dem(rng, size, config.relief)

    roughness = rng.uniform(0.0, 1.0, size=config.field_count)
    vv_field = -22.0 + 10.0 * roughness + _SAR_CLASS_OFFSET[field_class]
    vv = vv_field[fields]
    sar = np.stack([vv, vv - 7.0], axis=-1)
    sar = sar + rng.normal(0.0, config.sar_speckle_db, size=sar.shape)
    sar = np.clip(sar, -50.0, 10.0)

    month = int(rng.integers(1, 13))
    gap = int(rng.integers(0, 8))

    lr = degrade(hr, SCALE_FACTOR, config.noise_sigma, rng)
    lr = np.clip(lr, 0.0, 1.0)

    return SamplePair(
        sample_id=f"synth-{seed:08d}",
        lr=lr.astype(np.float32),
        hr=hr.astype(np.float32),
        dem=dem.astype(np.float32),
        landcover=field_class[fields].astype(np.uint8),
        sar=sar.astype(np.float32),
        month=month,
        acquisition_gap_days=gap,
    )


# ---------------------------------------------------------------------------
# Crop phenology series for the mapping harness

CROP_CLASS_NAMES = ("background", "corn", "soybean")
CROP_MONTHS = (6, 7, 8)

# (class, month index, band) reflectance trajectories.  Corn greens up
# early and peaks in July; soybean canopy closes later with lower SWIR;
# background drifts slowly.
_CROP_PHENOLOGY = np.array(
    [
        [  # background
            [0.14, 0.17, 0.20, 0.26, 0.33, 0.28],
            [0.15, 0.18, 0.21, 0.27, 0.34, 0.29],
            [0.16, 0.19, 0.22, 0.28, 0.35, 0.30],
        ],
        [  # corn
            [0.05, 0.08, 0.07, 0.35, 0.20, 0.11],
            [0.04, 0.07, 0.05, 0.52, 0.22, 0.10],
            [0.05, 0.08, 0.06, 0.48, 0.26, 0.13],
        ],
        [  # soybean
            [0.06, 0.09, 0.08, 0.28, 0.18, 0.10],
            [0.05, 0.08, 0.06, 0.45, 0.16, 0.08],
            [0.04, 0.07, 0.05, 0.50, 0.14, 0.07],
        ],
    ]
)


def synth_crop_series(seed: int, config: SynthConfig | None = None,
                      crop_fraction: float = 0.7) -> list[SamplePair]:
    """Three co-registered monthly samples over one field mosaic.

    The land-cover grid carries the crop label (0 background, 1 corn,
    2 soybean), identical across months; reflectance follows the per-class
    phenology so the stack of three months separates the classes.
    """
    config = config or SynthConfig()
    rng = np.random.default_rng(seed)
    size = config.hr_size

    fields = _field_map(rng, size, config.field_count)
    p_crop = crop_fraction / 2.0
    field_label = rng.choice(3, size=config.field_count,
                             p=[1.0 - crop_fraction, p_crop, p_crop])
    jitter = rng.normal(0.0, config.spectral_jitter,
                        size=(config.field_count, len(CROP_MONTHS), 6))
    dem = _smooth_dem(rng, size, config.relief)
    roughness = rng.uniform(0.0, 1.0, size=config.field_count)
    vv = (-20.0 + 8.0 * roughness)[fields]
    sar = np.stack([vv, vv - 7.0], axis=-1)
    sar = np.clip(sar + rng.normal(0.0, config.sar_speckle_db, size=sar.shape),
                  -50.0, 10.0)
    labels = field_label[fields].astype(np.uint8)

    samples = []
    for mi, month in enumerate(CROP_MONTHS):
        spectra = np.clip(
            _CROP_PHENOLOGY[field_label, mi] + jitter[:, mi], 0.01, 0.99
        )
        hr = spectra[fields]
        lr = np.clip(degrade(hr, SCALE_FACTOR, config.noise_sigma, rng), 0.0, 1.0)
        samples.append(
            SamplePair(
                sample_id=f"crop-{seed:06d}-m{month:02d}",
                lr=lr.astype(np.float32),
                hr=hr.astype(np.float32),
                dem=dem.astype(np.float32),
                landcover=labels.copy(),
                sar=sar.astype(np.float32),
                month=month,
                acquisition_gap_days=int(rng.integers(0, 8)),
            )
        )
    return samples
