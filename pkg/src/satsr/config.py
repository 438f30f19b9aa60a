"""Experiment configuration: one JSON-serializable tree of dataclasses.

Defaults reproduce the reference training recipe exactly: loss weights
(2.0, 1.0, 2.0, 1.0, 20.0), an adaptive-moment optimizer with decoupled
weight decay at lr 5e-5 on a constant schedule, batch size 1.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

from .losses import LossWeights

NDVI_SCALES = (0, 10, 20, 30)


@dataclass
class AblationFlags:
    """Component switches; each one adds or removes exactly the trainable
    parameters of its component."""

    dem_lc: bool = True
    month: bool = True
    cross_attention: bool = True
    fft: bool = True
    ndvi_scale: int = 20
    ir_specific_lora: bool = False
    sar_fusion: bool = True

    def validate(self) -> None:
        if self.ndvi_scale not in NDVI_SCALES:
            raise ValueError(
                f"ndvi_scale must be one of {NDVI_SCALES}, got {self.ndvi_scale}"
            )


@dataclass
class OptimizerConfig:
    kind: str = "adamw"
    lr: float = 5e-5
    schedule: str = "constant"
    weight_decay: float = 0.01
    clip_norm: float = 1.0

    def validate(self) -> None:
        if self.kind != "adamw":
            raise ValueError(f"unsupported optimizer kind {self.kind!r}")
        if self.schedule != "constant":
            raise ValueError(f"unsupported schedule {self.schedule!r}")
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")


@dataclass
class BackboneConfig:
    seed: int = 17
    latent_channels: int = 4
    width: int = 32
    text_dim: int = 64
    T: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02


@dataclass
class ExperimentConfig:
    seed: int = 0
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    adapter_rank: int = 4
    adapter_alpha: float | None = None
    loss_weights: LossWeights = field(default_factory=LossWeights)
    flags: AblationFlags = field(default_factory=AblationFlags)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    batch_size: int = 1
    steps: int = 2000
    t_star: int = 250
    p_null: float = 0.1
    feature_seed: int = 29
    fft_mode: str = "split"

    def validate(self) -> None:
        self.flags.validate()
        self.optimizer.validate()
        if self.batch_size != 1:
            raise ValueError(
                "batch sizes other than 1 are out of scope for this testbed"
            )
        if not 1 <= self.t_star <= self.backbone.T:
            raise ValueError(
                f"t_star must be in 1..{self.backbone.T}, got {self.t_star}"
            )
        if not 0.0 <= self.p_null <= 1.0:
            raise ValueError(f"p_null must be in [0, 1], got {self.p_null}")
        if self.adapter_rank < 1:
            raise ValueError(f"adapter_rank must be >= 1, got {self.adapter_rank}")
        if self.steps < 0:
            raise ValueError(f"steps must be >= 0, got {self.steps}")
        if self.fft_mode not in ("split", "modulus"):
            raise ValueError(f"fft_mode must be split or modulus, got {self.fft_mode}")

    def effective_weights(self) -> LossWeights:
        """Loss weights after applying the ablation switches."""
        return LossWeights(
            lam_pix=self.loss_weights.lam_pix,
            lam_lpips=self.loss_weights.lam_lpips,
            lam_csd=self.loss_weights.lam_csd,
            lam_fft=self.loss_weights.lam_fft if self.flags.fft else 0.0,
            lam_ndvi=float(self.flags.ndvi_scale),
        )

    def architecture_fingerprint(self) -> dict:
        """The fields a checkpoint must agree on to be loadable."""
        return {
            "backbone": asdict(self.backbone),
            "adapter_rank": self.adapter_rank,
            "adapter_alpha": self.adapter_alpha,
            "flags": asdict(self.flags),
            "feature_seed": self.feature_seed,
            "seed": self.seed,
        }

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        config = cls(
            backbone=BackboneConfig(**data.pop("backbone", {})),
            loss_weights=LossWeights(**data.pop("loss_weights", {})),
            flags=AblationFlags(**data.pop("flags", {})),
            optimizer=OptimizerConfig(**data.pop("optimizer", {})),
            **data,
        )
        config.validate()
        return config

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))
