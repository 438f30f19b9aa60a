"""Terrain, land-cover, and month conditioning of image latents.

Elevation and land-cover grids pass through shallow strided encoders down
to the latent resolution, the month through an embedding table broadcast
spatially; their sum is one auxiliary feature grid.  A gated multi-head
cross-attention reads that grid into the latent: queries come from the
latent, keys and values from the auxiliary features, and a scalar gate
(initialized to zero, so the module starts as the identity) scales the
injected residual.

Each branch (RGB, IR) owns its own instance; parameters are trainable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .attention import from_tokens, multihead_attention, to_tokens
from .backbone import LATENT_CHANNELS, seeded_init_
from .container import N_LANDCOVER

AUX_WIDTH = 64
N_HEADS = 4


@dataclass
class AuxFeatures:
    """The three conditioning grids and their elementwise sum."""

    f_dem: torch.Tensor
    f_lc: torch.Tensor
    f_month: torch.Tensor

    @property
    def z_aux(self) -> torch.Tensor:
        return self.f_dem + self.f_lc + self.f_month


class _StridedEncoder(nn.Module):
    """Three stride-2 convolutions: (c_in, H, W) -> (c_out, H/8, W/8)."""

    def __init__(self, c_in: int, c_out: int):
        super().__init__()
        self.conv1 = nn.Conv2d(c_in, 16, 3, stride=2, padding=1)
        self.conv2 = nn.Conv2d(16, 32, 3, stride=2, padding=1)
        self.conv3 = nn.Conv2d(32, c_out, 3, stride=2, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = F.silu(self.conv1(x))
        h = F.silu(self.conv2(h))
        return self.conv3(h)


class KnowledgeInjector(nn.Module):
    """Auxiliary-knowledge encoders plus the gated cross-attention.

    Flags create or omit parameter groups so ablations change the
    trainable-parameter count by exactly the disabled group's size.
    """

    def __init__(self, seed: int = 0, latent_channels: int = LATENT_CHANNELS,
                 width: int = AUX_WIDTH, n_heads: int = N_HEADS,
                 enable_dem_lc: bool = True, enable_month: bool = True,
                 enable_cross_attention: bool = True):
        super().__init__()
        if width % n_heads:
            raise ValueError(f"width {width} not divisible by {n_heads} heads")
        self.latent_channels = latent_channels
        self.width = width
        self.n_heads = n_heads
        self.enable_dem_lc = enable_dem_lc
        self.enable_month = enable_month
        self.enable_cross_attention = enable_cross_attention

        if enable_dem_lc:
            self.dem_encoder = _StridedEncoder(1, width)
            self.lc_encoder = _StridedEncoder(N_LANDCOVER, width)
        if enable_month:
            self.month_table = nn.Parameter(torch.zeros(12, width))
        if enable_cross_attention:
            self.w_q = nn.Linear(latent_channels, width, bias=False)
            self.w_k = nn.Linear(width, width, bias=False)
            self.w_v = nn.Linear(width, width, bias=False)
            self.w_out = nn.Linear(width, latent_channels, bias=False)
            self.gamma = nn.Parameter(torch.zeros(()))
        seeded_init_(self, seed)
        # seeded_init_ zeroes rank-1 params, which is exactly what the
        # gamma gate needs; re-check rather than trust ordering
        if enable_cross_attention:
            assert float(self.gamma.detach()) == 0.0

    # -- encoders -------------------------------------------------------

    def encode_dem(self, dem: torch.Tensor) -> torch.Tensor:
        """Z-score the elevation per sample, then encode.

        A flat grid (zero variance) normalizes to all zeros instead of
        dividing by zero.
        """
        if not self.enable_dem_lc:
            raise RuntimeError("dem/land-cover encoders are disabled")
        if not torch.isfinite(dem).all():
            raise ValueError("dem contains non-finite values")
        dem64 = dem.to(torch.float64)
        std = dem64.std(unbiased=False)
        if float(std) == 0.0:
            normed = torch.zeros_like(dem64)
        else:
            normed = (dem64 - dem64.mean()) / std
        dtype = self.dem_encoder.conv1.weight.dtype
        return self.dem_encoder(normed.to(dtype).unsqueeze(0))

    def encode_landcover(self, lc: torch.Tensor) -> torch.Tensor:
        if not self.enable_dem_lc:
            raise RuntimeError("dem/land-cover encoders are disabled")
        codes = lc.long()
        if codes.min() < 0 or codes.max() >= N_LANDCOVER:
            raise ValueError(
                f"land-cover codes must be in 0..{N_LANDCOVER - 1}, "
                f"got {int(codes.min())}..{int(codes.max())}"
            )
        dtype = self.lc_encoder.conv1.weight.dtype
        onehot = F.one_hot(codes, N_LANDCOVER).permute(2, 0, 1).to(dtype)
        return self.lc_encoder(onehot)

    def encode_month(self, month: int, h: int, w: int) -> torch.Tensor:
        if not self.enable_month:
            raise RuntimeError("month embedding is disabled")
        month = int(month)
        if not 1 <= month <= 12:
            raise ValueError(f"month must be in 1..12, got {month}")
        vec = self.month_table[month - 1]
        return vec[:, None, None].expand(self.width, h, w)

    def aux_features(self, dem: torch.Tensor, lc: torch.Tensor,
                     month: int, latent_hw: tuple[int, int]) -> AuxFeatures:
        """Assemble the three grids at the latent resolution.

        Disabled groups contribute exact zeros, keeping the sum contract
        intact for every flag combination.
        """
        h, w = latent_hw
        ref = next(self.parameters(), None)
        dtype = ref.dtype if ref is not None else torch.float32
        zeros = torch.zeros(self.width, h, w, dtype=dtype)
        if self.enable_dem_lc:
            f_dem = self.encode_dem(dem)
            f_lc = self.encode_landcover(lc)
            if f_dem.shape[-2:] != (h, w):
                raise ValueError(
                    f"aux encoders produced {tuple(f_dem.shape[-2:])}, "
                    f"latent is {(h, w)}"
                )
        else:
            f_dem, f_lc = zeros, zeros.clone()
        f_month = (self.encode_month(month, h, w) if self.enable_month
                   else zeros.clone())
        return AuxFeatures(f_dem=f_dem, f_lc=f_lc, f_month=f_month)

    # -- injection ------------------------------------------------------

    def inject(self, z_img: torch.Tensor, z_aux: torch.Tensor,
               return_weights: bool = False):
        """Gated cross-attention residual: z + gamma * back-projection.

        With the gate at zero (the initial state) the input is returned
        unchanged, bit for bit.
        """
        if not self.enable_cross_attention:
            return (z_img, None) if return_weights else z_img
        if z_img.shape[0] != self.latent_channels:
            raise ValueError(
                f"latent must have {self.latent_channels} channels, "
                f"got {tuple(z_img.shape)}"
            )
        if z_aux.shape[0] != self.width:
            raise ValueError(
                f"aux grid must have {self.width} channels, got {tuple(z_aux.shape)}"
            )
        h, w = z_img.shape[1:]
        q = self.w_q(to_tokens(z_img))
        aux_tokens = to_tokens(z_aux)
        k = self.w_k(aux_tokens)
        v = self.w_v(aux_tokens)
        attn, weights = multihead_attention(q, k, v, self.n_heads,
                                            return_weights=True)
        residual = from_tokens(self.w_out(attn), h, w)
        z_hat = z_img + self.gamma * residual
        if return_weights:
            return z_hat, weights
        return z_hat

    def forward(self, z_img: torch.Tensor, dem: torch.Tensor,
                lc: torch.Tensor, month: int) -> torch.Tensor:
        if not self.enable_cross_attention:
            return z_img
        aux = self.aux_features(dem, lc, month, tuple(z_img.shape[1:]))
        return self.inject(z_img, aux.z_aux)

    def parameter_count(self) -> int:
        return sum(int(np.prod(p.shape)) for p in self.parameters())
