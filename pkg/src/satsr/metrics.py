"""Image-quality and classification metrics with oracle-friendly forms.

Array metrics run in numpy at float64; the two feature-space metrics reuse
the losses module's frozen extractor through torch.  Conventions chosen
for the degenerate cases are part of the contract: identical inputs give
the ideal value exactly, zero-MSE PSNR is capped at 100 dB, zero-norm
spectra are skipped by the spectral angle, and zero denominators in the
classification ratios produce 0.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass

import numpy as np
import torch

from .bands import NIR, RED
from .losses import NDVI_EPS, FeatureExtractor, lpips_proxy

PSNR_CAP_DB = 100.0

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def psnr(pred: np.ndarray, target: np.ndarray, peak: float = 1.0) -> float:
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    mse = float(np.mean((np.asarray(pred, np.float64)
                         - np.asarray(target, np.float64)) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return float(10.0 * np.log10(peak * peak / mse))


def _gaussian_1d(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    return g / g.sum()


def _sep_filter_valid(plane: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Valid-mode correlation with the separable window g x g."""
    win = g.size
    rows = np.lib.stride_tricks.sliding_window_view(plane, win, axis=1) @ g
    return np.lib.stride_tricks.sliding_window_view(rows, win, axis=0) @ g


def ssim(pred: np.ndarray, target: np.ndarray, peak: float = 1.0) -> float:
    """Windowed structural similarity, Gaussian 11x11 window, sigma 1.5.

    Accepts (H, W) or (H, W, C); channels are averaged.  The image must
    be at least as large as the window.
    """
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    if pred.ndim == 2:
        pred = pred[..., None]
        target = target[..., None]
    if pred.ndim != 3:
        raise ValueError(f"expected (H, W) or (H, W, C), got {pred.shape}")
    if pred.shape[0] < SSIM_WINDOW or pred.shape[1] < SSIM_WINDOW:
        raise ValueError(
            f"image {pred.shape[:2]} smaller than the "
            f"{SSIM_WINDOW}x{SSIM_WINDOW} window"
        )
    g = _gaussian_1d()
    c1 = (SSIM_K1 * peak) ** 2
    c2 = (SSIM_K2 * peak) ** 2
    values = []
    for ch in range(pred.shape[2]):
        x = np.asarray(pred[..., ch], np.float64)
        y = np.asarray(target[..., ch], np.float64)
        mu_x = _sep_filter_valid(x, g)
        mu_y = _sep_filter_valid(y, g)
        var_x = _sep_filter_valid(x * x, g) - mu_x**2
        var_y = _sep_filter_valid(y * y, g) - mu_y**2
        cov = _sep_filter_valid(x * y, g) - mu_x * mu_y
        num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
        den = (mu_x**2 + mu_y**2 + c1) * (var_x + var_y + c2)
        values.append(float(np.mean(num / den)))
    return float(np.mean(values))


def sam(pred6: np.ndarray, target6: np.ndarray) -> float:
    """Mean spectral angle in degrees over the six-band axis.

    Pixels where either spectrum has zero norm carry no angle and are
    skipped; a scene with no valid pixel at all is an error.
    """
    if pred6.shape != target6.shape or pred6.ndim != 3:
        raise ValueError(
            f"expected matching (H, W, B) arrays, got {pred6.shape} "
            f"and {target6.shape}"
        )
    p = np.asarray(pred6, np.float64).reshape(-1, pred6.shape[-1])
    t = np.asarray(target6, np.float64).reshape(-1, target6.shape[-1])
    np_norm = np.linalg.norm(p, axis=1)
    nt_norm = np.linalg.norm(t, axis=1)
    valid = (np_norm > 0) & (nt_norm > 0)
    if not valid.any():
        raise ValueError("every pixel has a zero-norm spectrum")
    cosang = (p[valid] * t[valid]).sum(axis=1) / (np_norm[valid] * nt_norm[valid])
    angles = np.degrees(np.arccos(np.clip(cosang, -1.0, 1.0)))
    return float(angles.mean())


def ndvi_grid(patch6: np.ndarray) -> np.ndarray:
    """Vegetation index from a (H, W, 6) patch, same formula as the loss."""
    nir = np.asarray(patch6[..., NIR], np.float64)
    red = np.asarray(patch6[..., RED], np.float64)
    return (nir - red) / (nir + red + NDVI_EPS)


def ndvi_mse_metric(pred6: np.ndarray, target6: np.ndarray) -> float:
    if pred6.shape != target6.shape:
        raise ValueError(f"shape mismatch: {pred6.shape} vs {target6.shape}")
    return float(np.mean((ndvi_grid(pred6) - ndvi_grid(target6)) ** 2))


def fcl(pred3: torch.Tensor, target3: torch.Tensor,
        extractor: FeatureExtractor) -> float:
    """Feature consistency: MSE between final-stage embeddings."""
    with torch.no_grad():
        fp = extractor.final_stage(pred3)
        ft = extractor.final_stage(target3)
        return float(((fp - ft) ** 2).mean())


def lpips_metric(pred3: torch.Tensor, target3: torch.Tensor,
                 extractor: FeatureExtractor) -> float:
    with torch.no_grad():
        return float(lpips_proxy(pred3, target3, extractor))


# -- classification ------------------------------------------------------


@dataclass
class ConfusionMatrix:
    """counts[i, j] = pixels whose true class is i, predicted as j."""

    counts: np.ndarray
    class_names: tuple[str, ...]

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        k = len(self.class_names)
        if self.counts.shape != (k, k):
            raise ValueError(
                f"counts must be ({k}, {k}), got {self.counts.shape}"
            )
        if (self.counts < 0).any():
            raise ValueError("confusion counts must be nonnegative")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @classmethod
    def from_labels(cls, true: np.ndarray, pred: np.ndarray,
                    class_names: tuple[str, ...]) -> "ConfusionMatrix":
        k = len(class_names)
        true = np.asarray(true).ravel().astype(np.int64)
        pred = np.asarray(pred).ravel().astype(np.int64)
        if true.shape != pred.shape:
            raise ValueError("label arrays differ in length")
        if true.min(initial=0) < 0 or true.max(initial=0) >= k \
                or pred.min(initial=0) < 0 or pred.max(initial=0) >= k:
            raise ValueError(f"labels must lie in 0..{k - 1}")
        counts = np.zeros((k, k), dtype=np.int64)
        np.add.at(counts, (true, pred), 1)
        return cls(counts, tuple(class_names))


@dataclass
class ClassificationReport:
    class_names: tuple[str, ...]
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    iou: np.ndarray

    @property
    def macro_precision(self) -> float:
        return float(self.precision.mean())

    @property
    def macro_recall(self) -> float:
        return float(self.recall.mean())

    @property
    def macro_f1(self) -> float:
        return float(self.f1.mean())

    @property
    def macro_iou(self) -> float:
        return float(self.iou.mean())


def _ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.zeros_like(num, dtype=np.float64)
    nonzero = den > 0
    out[nonzero] = num[nonzero] / den[nonzero]
    return out


def classification_metrics(cm: ConfusionMatrix) -> ClassificationReport:
    """Per-class precision/recall/F1/IoU plus unweighted macro means."""
    if cm.total == 0:
        raise ValueError("empty confusion matrix")
    counts = cm.counts.astype(np.float64)
    tp = np.diag(counts)
    fp = counts.sum(axis=0) - tp
    fn = counts.sum(axis=1) - tp
    precision = _ratio(tp, tp + fp)
    recall = _ratio(tp, tp + fn)
    f1 = _ratio(2.0 * precision * recall, precision + recall)
    iou = _ratio(tp, tp + fp + fn)
    return ClassificationReport(cm.class_names, precision, recall, f1, iou)


# -- report and timing ---------------------------------------------------


@dataclass
class MetricReport:
    psnr_rgb: float
    ssim_rgb: float
    lpips_rgb: float
    fcl_rgb: float
    psnr_ir: float
    ssim_ir: float
    lpips_ir: float
    fcl_ir: float
    sam_deg: float
    ndvi_mse: float
    infer_seconds_per_image: float
    trainable_param_count: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "MetricReport":
        return cls(**json.loads(text))


def timing_and_params(infer_fn, sample, trainable_params,
                      runs: int = 20) -> tuple[float, int]:
    """Mean wall-clock seconds per inference (after one warmup) and the
    trainable-parameter count.

    `trainable_params` is either the count itself or an iterable of
    tensors to be counted (frozen ones excluded)."""
    if runs < 1:
        raise ValueError("runs must be >= 1")
    infer_fn(sample)
    start = time.perf_counter()
    for _ in range(runs):
        infer_fn(sample)
    seconds = (time.perf_counter() - start) / runs
    if isinstance(trainable_params, (int, np.integer)):
        count = int(trainable_params)
    else:
        count = sum(int(np.prod(p.shape)) for p in trainable_params
                    if getattr(p, "requires_grad", True))
    return seconds, count
