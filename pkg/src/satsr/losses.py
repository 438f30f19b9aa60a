"""Per-branch training objective: five weighted terms, summed over branches.

Reduction is `mean` in every term so the weights stay scale-free across
patch sizes.  The perceptual term and the feature-consistency metric share
one seeded frozen extractor (a pretrained perceptual network is out of
scope here, so absolute values are stand-in quantities; the invariants and
relative orderings are what count).
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .backbone import FrozenBackbone, freeze_, parameter_checksum, seeded_init_

NDVI_EPS = 1e-6
_NORM_EPS = 1e-10

# Uniform draw range and weighting for the distillation timestep.
CSD_T_RANGE = (50, 950)


@dataclass(frozen=True)
class LossWeights:
    lam_pix: float = 2.0
    lam_lpips: float = 1.0
    lam_csd: float = 2.0
    lam_fft: float = 1.0
    lam_ndvi: float = 20.0

    def __post_init__(self):
        for name, value in vars(self).items():
            if value < 0:
                raise ValueError(f"{name} must be nonnegative, got {value}")


@dataclass
class BranchLosses:
    l2: torch.Tensor
    lpips: torch.Tensor
    csd: torch.Tensor
    fft: torch.Tensor
    ndvi: torch.Tensor
    weighted_total: torch.Tensor

    def detached(self) -> dict[str, float]:
        return {name: float(getattr(self, name).detach())
                for name in ("l2", "lpips", "csd", "fft", "ndvi",
                             "weighted_total")}


@dataclass
class LossBreakdown:
    rgb: BranchLosses
    ir: BranchLosses

    @property
    def grand_total(self) -> torch.Tensor:
        return self.rgb.weighted_total + self.ir.weighted_total


def _check_shapes(pred: torch.Tensor, target: torch.Tensor) -> None:
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs "
                         f"{tuple(target.shape)}")


def l2_loss(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    _check_shapes(pred, target)
    return ((pred - target) ** 2).mean()


class FeatureExtractor(nn.Module):
    """Three seeded frozen conv stages standing in for a pretrained net."""

    STAGE_WIDTHS = (16, 32, 64)

    def __init__(self, seed: int = 29):
        super().__init__()
        self.seed = int(seed)
        widths = (3,) + self.STAGE_WIDTHS
        self.convs = nn.ModuleList(
            nn.Conv2d(widths[i], widths[i + 1], 3, stride=2, padding=1)
            for i in range(3)
        )
        seeded_init_(self, seed)
        freeze_(self)

    def stages(self, image3: torch.Tensor) -> list[torch.Tensor]:
        if image3.ndim != 3 or image3.shape[0] != 3:
            raise ValueError(f"expected (3, H, W), got {tuple(image3.shape)}")
        feats = []
        h = image3
        for i, conv in enumerate(self.convs):
            h = conv(h) if i == 0 else conv(F.silu(h))
            feats.append(h)
        return feats

    def final_stage(self, image3: torch.Tensor) -> torch.Tensor:
        return self.stages(image3)[-1]

    def checksum(self) -> str:
        return parameter_checksum(self)


def _unit_normalize(feat: torch.Tensor) -> torch.Tensor:
    # unit channel vectors per spatial location, epsilon-guarded
    norm = torch.sqrt((feat**2).sum(dim=0, keepdim=True) + _NORM_EPS)
    return feat / norm


def lpips_proxy(pred: torch.Tensor, target: torch.Tensor,
                extractor: FeatureExtractor) -> torch.Tensor:
    """Perceptual distance: per stage, squared difference of channel-unit
    feature vectors, averaged over space and channels, summed over stages."""
    _check_shapes(pred, target)
    total = None
    for fp, ft in zip(extractor.stages(pred), extractor.stages(target)):
        d = ((_unit_normalize(fp) - _unit_normalize(ft)) ** 2).mean()
        total = d if total is None else total + d
    return total


def csd_loss(z_sem: torch.Tensor, frozen_backbone: FrozenBackbone,
             e_pos: torch.Tensor, e_null: torch.Tensor, t: int,
             w_t: float) -> torch.Tensor:
    """Contrastive distillation with a stopgrad anchor.

    The guidance field w_t * (eps(z, t, pos) - eps(z, t, null)) is
    evaluated without gradient tracking; the returned scalar is its mean
    square, built so that backward delivers exactly 2 * field / N to z_sem
    and nothing to the backbone.
    """
    if not z_sem.requires_grad:
        raise ValueError("z_sem must require gradients for the distillation "
                         "loss")
    with torch.no_grad():
        eps_pos = frozen_backbone.denoise(z_sem, t, e_pos)
        eps_null = frozen_backbone.denoise(z_sem, t, e_null)
        field = float(w_t) * (eps_pos - eps_null)
    anchor = (z_sem - field).detach()
    return ((z_sem - anchor) ** 2).mean()


def fft_loss(pred: torch.Tensor, target: torch.Tensor,
             mode: str = "split") -> torch.Tensor:
    """L1 spectrum alignment on the unnormalized 2-D DFT.

    mode "split" averages |dRe| and |dIm| per bin; "modulus" takes |dF|
    of the complex difference instead.
    """
    _check_shapes(pred, target)
    diff = torch.fft.fft2(pred, norm="backward") - torch.fft.fft2(
        target, norm="backward")
    if mode == "split":
        return ((diff.real.abs() + diff.imag.abs()) / 2.0).mean()
    if mode == "modulus":
        return diff.abs().mean()
    raise ValueError(f"mode must be 'split' or 'modulus', got {mode!r}")


def ndvi(image_rgb: torch.Tensor, image_ir: torch.Tensor) -> torch.Tensor:
    """Vegetation index grid from the red and near-infrared channels.

    Channel 0 of the rgb stack is Red, channel 0 of the ir stack is NIR
    (stack order fixed package-wide); the epsilon keeps 0/0 at 0.
    """
    _check_shapes(image_rgb, image_ir)
    red = image_rgb[0]
    nir = image_ir[0]
    return (nir - red) / (nir + red + NDVI_EPS)


def ndvi_loss(pred_rgb: torch.Tensor, pred_ir: torch.Tensor,
              tgt_rgb: torch.Tensor, tgt_ir: torch.Tensor) -> torch.Tensor:
    return ((ndvi(pred_rgb, pred_ir) - ndvi(tgt_rgb, tgt_ir)) ** 2).mean()


def branch_loss(l2: torch.Tensor, lpips: torch.Tensor, csd: torch.Tensor,
                fft: torch.Tensor, ndvi_term: torch.Tensor,
                weights: LossWeights) -> BranchLosses:
    """Assemble one branch's weighted total from its five terms."""
    total = (weights.lam_pix * l2 + weights.lam_lpips * lpips
             + weights.lam_csd * csd + weights.lam_fft * fft
             + weights.lam_ndvi * ndvi_term)
    return BranchLosses(l2=l2, lpips=lpips, csd=csd, fft=fft, ndvi=ndvi_term,
                        weighted_total=total)


def compute_breakdown(
    pix_rgb: torch.Tensor, sem_rgb: torch.Tensor, z_sem_rgb: torch.Tensor,
    pix_ir: torch.Tensor, sem_ir: torch.Tensor, z_sem_ir: torch.Tensor,
    target_rgb: torch.Tensor, target_ir: torch.Tensor,
    backbone: FrozenBackbone, e_pos: torch.Tensor, e_null: torch.Tensor,
    t_csd: int, w_t: float, extractor: FeatureExtractor,
    weights: LossWeights, use_fft: bool = True, fft_mode: str = "split",
) -> LossBreakdown:
    """Full two-branch objective.

    The pixel-branch decode takes the reconstruction term; the semantic
    decode takes the perceptual, spectrum, and vegetation terms, and its
    latent the distillation term.  The vegetation term needs bands from
    both branches, so the single shared value is counted in each branch's
    total, matching the per-branch sum as written.
    """
    zero = torch.zeros((), dtype=pix_rgb.dtype)
    ndvi_term = ndvi_loss(sem_rgb, sem_ir, target_rgb, target_ir)
    branches = {}
    for name, pix, sem, z_sem, target in (
        ("rgb", pix_rgb, sem_rgb, z_sem_rgb, target_rgb),
        ("ir", pix_ir, sem_ir, z_sem_ir, target_ir),
    ):
        branches[name] = branch_loss(
            l2=l2_loss(pix, target),
            lpips=lpips_proxy(sem, target, extractor),
            csd=csd_loss(z_sem, backbone, e_pos, e_null, t_csd, w_t),
            fft=fft_loss(sem, target, fft_mode) if use_fft else zero.clone(),
            ndvi_term=ndvi_term,
            weights=weights,
        )
    return LossBreakdown(rgb=branches["rgb"], ir=branches["ir"])
