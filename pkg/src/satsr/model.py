"""The assembled super-resolution pipeline.

One object owns the frozen backbone plus every trainable component and
runs the restoration recipe: bicubic pre-upsampling, band split, latent
encoding, knowledge injection, two adapter-equipped denoiser passes, the
single-step latent update, decoding, and radar-guided refinement of the
semantic decode.  Components disabled by ablation flags are simply not
constructed, so the trainable-parameter count shifts by exactly each
component's size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .adapters import AdapterSet, dual_branch_forward, init_adapter_set
from .backbone import FrozenBackbone
from .bands import band_merge, band_split, normalize_sar
from .config import ExperimentConfig
from .container import SCALE_FACTOR, SamplePair
from .knowledge import KnowledgeInjector
from .losses import FeatureExtractor
from .resample import bicubic_upsample
from .sarfusion import SarFusion
from .schedule import latent_step, make_schedule

BRANCHES = ("rgb", "ir")

# fixed sub-seed offsets so every component draws independent weights
_SEED_STRIDE = 100
_OFFSETS = {
    "pixel": 11, "semantic": 12, "ir_pixel": 13, "ir_semantic": 14,
    "knowledge_rgb": 21, "knowledge_ir": 22,
    "sar_rgb": 31, "sar_ir": 32,
}


def to_chw(image_hwc: np.ndarray, dtype=torch.float32) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(
        np.moveaxis(image_hwc, -1, 0))).to(dtype)


def to_hwc(tensor_chw: torch.Tensor) -> np.ndarray:
    return np.moveaxis(tensor_chw.detach().cpu().numpy(), 0, -1)


@dataclass
class BranchOutputs:
    """Everything the loss needs from one branch's forward pass."""

    pix_decode: torch.Tensor
    sem_decode: torch.Tensor
    refined: torch.Tensor
    z_sem: torch.Tensor


@dataclass
class SampleTensors:
    """Torch views of one sample, prepared once per step."""

    inputs: dict  # branch -> (3, H, W) model input
    targets: dict  # branch -> (3, H, W) reference
    dem: torch.Tensor
    landcover: torch.Tensor
    sar: torch.Tensor  # (2, H, W), normalized to [0, 1]
    month: int


class SuperResolver:
    def __init__(self, config: ExperimentConfig):
        config.validate()
        self.config = config
        bb = config.backbone
        self.schedule = make_schedule(bb.T, bb.beta_start, bb.beta_end)
        self.backbone = FrozenBackbone(seed=bb.seed,
                                       latent_channels=bb.latent_channels,
                                       width=bb.width, text_dim=bb.text_dim)
        self.extractor = FeatureExtractor(seed=config.feature_seed)

        base = config.seed * _SEED_STRIDE

        def mk_adapters(branch, offset):
            return init_adapter_set(self.backbone, branch, config.adapter_rank,
                                    seed=base + _OFFSETS[offset],
                                    alpha=config.adapter_alpha)

        self.adapter_sets: dict[str, dict[str, AdapterSet]] = {}
        shared = {"pixel": mk_adapters("pixel", "pixel"),
                  "semantic": mk_adapters("pixel+semantic", "semantic")}
        self.adapter_sets["rgb"] = shared
        if config.flags.ir_specific_lora:
            self.adapter_sets["ir"] = {
                "pixel": mk_adapters("pixel", "ir_pixel"),
                "semantic": mk_adapters("pixel+semantic", "ir_semantic"),
            }
        else:
            self.adapter_sets["ir"] = shared

        self.knowledge: dict[str, KnowledgeInjector] = {}
        for branch in BRANCHES:
            self.knowledge[branch] = KnowledgeInjector(
                seed=base + _OFFSETS[f"knowledge_{branch}"],
                latent_channels=bb.latent_channels,
                enable_dem_lc=config.flags.dem_lc,
                enable_month=config.flags.month,
                enable_cross_attention=config.flags.cross_attention,
            )

        self.sar_fusion: dict[str, SarFusion] = {}
        if config.flags.sar_fusion:
            for branch in BRANCHES:
                self.sar_fusion[branch] = SarFusion(
                    seed=base + _OFFSETS[f"sar_{branch}"])

    # -- bookkeeping ----------------------------------------------------

    def trainable_modules(self) -> dict[str, nn.Module]:
        """Stable name -> module, for the optimizer and checkpoints."""
        modules: dict[str, nn.Module] = {
            "adapters.pixel": self.adapter_sets["rgb"]["pixel"],
            "adapters.semantic": self.adapter_sets["rgb"]["semantic"],
        }
        if self.config.flags.ir_specific_lora:
            modules["adapters.ir_pixel"] = self.adapter_sets["ir"]["pixel"]
            modules["adapters.ir_semantic"] = self.adapter_sets["ir"]["semantic"]
        for branch in BRANCHES:
            modules[f"knowledge.{branch}"] = self.knowledge[branch]
        for branch, module in self.sar_fusion.items():
            modules[f"sar_fusion.{branch}"] = module
        return modules

    def named_trainable_parameters(self) -> list[tuple[str, nn.Parameter]]:
        out = []
        for prefix, module in self.trainable_modules().items():
            for name, param in module.named_parameters():
                out.append((f"{prefix}.{name}", param))
        return out

    def trainable_parameters(self) -> list[nn.Parameter]:
        return [p for _, p in self.named_trainable_parameters()]

    def parameter_counts(self) -> dict[str, int]:
        """Trainable parameters per component plus the total."""
        counts = {name: sum(int(np.prod(p.shape)) for p in mod.parameters())
                  for name, mod in self.trainable_modules().items()}
        counts["total"] = sum(counts.values())
        return counts

    # -- forward passes -------------------------------------------------

    def prepare(self, sample: SamplePair) -> SampleTensors:
        """Upsample, split bands, and tensorize one validated sample."""
        up = np.clip(bicubic_upsample(sample.lr.astype(np.float64),
                                      SCALE_FACTOR), 0.0, 1.0)
        up_rgb, up_ir = band_split(up.astype(np.float32))
        hr_rgb, hr_ir = band_split(sample.hr)
        return SampleTensors(
            inputs={"rgb": to_chw(up_rgb), "ir": to_chw(up_ir)},
            targets={"rgb": to_chw(hr_rgb), "ir": to_chw(hr_ir)},
            dem=torch.from_numpy(np.ascontiguousarray(sample.dem)),
            landcover=torch.from_numpy(
                np.ascontiguousarray(sample.landcover)).long(),
            sar=to_chw(normalize_sar(sample.sar).astype(np.float32)),
            month=sample.month,
        )

    def forward_branch(self, branch: str, tensors: SampleTensors,
                       cond: torch.Tensor) -> BranchOutputs:
        z = self.backbone.encode(tensors.inputs[branch])
        injector = self.knowledge[branch]
        if injector.enable_cross_attention:
            aux = injector.aux_features(tensors.dem, tensors.landcover,
                                        tensors.month, tuple(z.shape[1:]))
            z = injector.inject(z, aux.z_aux)
        sets = self.adapter_sets[branch]
        z_pix, z_sem = dual_branch_forward(
            self.backbone, z, self.config.t_star, cond,
            sets["pixel"], sets["semantic"])
        pix_decode = self.backbone.decode(z_pix)
        sem_decode = self.backbone.decode(z_sem)
        refined = sem_decode
        if branch in self.sar_fusion:
            refined = self.sar_fusion[branch](sem_decode, tensors.sar)
        return BranchOutputs(pix_decode=pix_decode, sem_decode=sem_decode,
                             refined=refined, z_sem=z_sem)

    def forward_all(self, tensors: SampleTensors,
                    cond: torch.Tensor) -> dict[str, BranchOutputs]:
        return {branch: self.forward_branch(branch, tensors, cond)
                for branch in BRANCHES}

    def infer(self, sample: SamplePair) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Deterministic restoration: (rgb, ir, merged 6-band), all HWC
        float32 clipped to [0, 1]."""
        tensors = self.prepare(sample)
        cond = self.backbone.embedding("positive")
        with torch.no_grad():
            outs = self.forward_all(tensors, cond)
        rgb = np.clip(to_hwc(outs["rgb"].refined), 0.0, 1.0).astype(np.float32)
        ir = np.clip(to_hwc(outs["ir"].refined), 0.0, 1.0).astype(np.float32)
        return rgb, ir, band_merge(rgb, ir)

    def frozen_infer(self, sample: SamplePair) -> tuple[np.ndarray, np.ndarray,
                                                        np.ndarray]:
        """The untouched backbone alone: no adapters, no conditioning
        modules, no refinement.  The reference for identity-at-init."""
        tensors = self.prepare(sample)
        cond = self.backbone.embedding("positive")
        images = {}
        with torch.no_grad():
            for branch in BRANCHES:
                z = self.backbone.encode(tensors.inputs[branch])
                eps = self.backbone.denoise(z, self.config.t_star, cond)
                images[branch] = self.backbone.decode(latent_step(z, eps))
        rgb = np.clip(to_hwc(images["rgb"]), 0.0, 1.0).astype(np.float32)
        ir = np.clip(to_hwc(images["ir"]), 0.0, 1.0).astype(np.float32)
        return rgb, ir, band_merge(rgb, ir)


def bicubic_baseline(sample: SamplePair) -> np.ndarray:
    """The comparison system: plain bicubic upsampling, clipped, HWC f32."""
    up = bicubic_upsample(sample.lr.astype(np.float64), SCALE_FACTOR)
    return np.clip(up, 0.0, 1.0).astype(np.float32)
