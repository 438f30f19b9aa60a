"""Frozen generative backbone stand-in.

A pretrained latent autoencoder, denoiser, and text encoder are replaced
by seeded random-weight networks that are frozen at construction.  Every
weight is a pure function of the constructor seed, so two instances built
with the same seed agree bitwise and a checksum can prove nothing moved
during training.  Gradients still flow through the frozen graph to any
trainable inputs (latents, adapter deltas, conditioning features).

Geometry: images are unbatched (3, H, W) tensors, latents (C, H/8, W/8).
The denoiser is a small two-level U-net of constant width with eight named
1x1-convolution mix points where low-rank adapters may add deltas.
"""

from __future__ import annotations

import hashlib
import math

import torch
import torch.nn.functional as F
from torch import nn

LATENT_CHANNELS = 4
WIDTH = 32
TEXT_DIM = 64
DOWN_FACTOR = 8

# Mix sites in forward order; adapters address these by name.
SITES = ("stem", "down1", "down2", "mid1", "mid2", "up1", "up2", "head")
TEXT_TAGS = ("positive", "negative", "null")


def seeded_init_(module: nn.Module, seed: int,
                 gain_overrides: dict[str, float] | None = None) -> None:
    """Overwrite every parameter of `module` from a dedicated generator.

    Weights get fan-in scaled normals (optionally damped per name
    substring), biases zeros.  Construction-time defaults from the global
    RNG are discarded, so the result depends only on `seed` and the
    registration order of the parameters.
    """
    gen = torch.Generator().manual_seed(seed)
    overrides = gain_overrides or {}
    for name, param in module.named_parameters():
        gain = 1.0
        for key, value in overrides.items():
            if key in name:
                gain = value
        with torch.no_grad():
            if param.ndim >= 2:
                fan_in = math.prod(param.shape[1:])
                param.normal_(0.0, gain * math.sqrt(2.0 / fan_in), generator=gen)
            else:
                param.zero_()


def freeze_(module: nn.Module) -> None:
    for param in module.parameters():
        param.requires_grad_(False)


def parameter_checksum(module: nn.Module) -> str:
    """SHA-256 over all parameters (names + little-endian bytes)."""
    digest = hashlib.sha256()
    for name, param in sorted(module.named_parameters()):
        digest.update(name.encode("utf-8"))
        data = param.detach().cpu().contiguous().to(torch.float32).numpy()
        if data.dtype.byteorder == ">":
            data = data.astype(data.dtype.newbyteorder("<"))
        digest.update(data.tobytes())
    return digest.hexdigest()


def _upsample2(x: torch.Tensor) -> torch.Tensor:
    # interpolate has no unbatched form, so round-trip through a batch axis
    return F.interpolate(x.unsqueeze(0), scale_factor=2, mode="nearest").squeeze(0)


def time_features(t: int, dim: int = WIDTH) -> torch.Tensor:
    """Sinusoidal features of an integer timestep, float64."""
    half = dim // 2
    k = torch.arange(half, dtype=torch.float64)
    freqs = torch.exp(-math.log(10000.0) * k / half)
    args = float(t) * freqs
    return torch.cat([torch.sin(args), torch.cos(args)])


class FrozenBackbone(nn.Module):
    """Seeded, frozen autoencoder + conditional denoiser + text table."""

    def __init__(self, seed: int = 17, latent_channels: int = LATENT_CHANNELS,
                 width: int = WIDTH, text_dim: int = TEXT_DIM):
        super().__init__()
        self.seed = int(seed)
        self.latent_channels = latent_channels
        self.width = width
        self.text_dim = text_dim

        # image -> latent, three stride-2 stages
        self.enc1 = nn.Conv2d(3, 16, 3, stride=2, padding=1)
        self.enc2 = nn.Conv2d(16, 32, 3, stride=2, padding=1)
        self.enc3 = nn.Conv2d(32, latent_channels, 3, stride=2, padding=1)

        # latent -> image, affine output centered on mid-gray; gradients
        # through the decoder never vanish
        self.dec1 = nn.ConvTranspose2d(latent_channels, 32, 4, stride=2, padding=1)
        self.dec2 = nn.ConvTranspose2d(32, 16, 4, stride=2, padding=1)
        self.dec3 = nn.ConvTranspose2d(16, 3, 4, stride=2, padding=1)

        # denoiser trunk
        self.stem = nn.Conv2d(latent_channels, width, 3, padding=1)
        self.down1 = nn.Conv2d(width, width, 3, stride=2, padding=1)
        self.down2 = nn.Conv2d(width, width, 3, stride=2, padding=1)
        self.mid_a = nn.Conv2d(width, width, 3, padding=1)
        self.mid_b = nn.Conv2d(width, width, 3, padding=1)
        self.up1 = nn.Conv2d(width, width, 3, padding=1)
        self.up2 = nn.Conv2d(width, width, 3, padding=1)
        self.head_conv = nn.Conv2d(width, width, 3, padding=1)
        self.out_conv = nn.Conv2d(width, latent_channels, 3, padding=1)
        self.mixes = nn.ModuleDict(
            {site: nn.Conv2d(width, width, 1, bias=False) for site in SITES}
        )

        self.t_proj = nn.Linear(width, width)
        self.cond_proj = nn.Linear(text_dim, width)
        self.text_table = nn.Parameter(torch.zeros(len(TEXT_TAGS), text_dim))

        seeded_init_(self, seed, {
            "dec3": 0.1,        # tame high-frequency content in decodes
            "out_conv": 0.5,    # keep predicted noise commensurate with latents
            "text_table": 0.02,
            "cond_proj": 0.05,  # conditioning nudges, never dominates
        })
        # text rows need spread despite being "bias-like" rank-2
        gen = torch.Generator().manual_seed(seed + 1)
        with torch.no_grad():
            self.text_table.normal_(0.0, 0.05, generator=gen)
        freeze_(self)

    # -- autoencoder ----------------------------------------------------

    def encode(self, image: torch.Tensor) -> torch.Tensor:
        if image.ndim != 3 or image.shape[0] != 3:
            raise ValueError(f"encode expects (3, H, W), got {tuple(image.shape)}")
        if image.shape[1] % DOWN_FACTOR or image.shape[2] % DOWN_FACTOR:
            raise ValueError(
                f"image size must be divisible by {DOWN_FACTOR}, "
                f"got {tuple(image.shape[1:])}"
            )
        h = F.silu(self.enc1(image))
        h = F.silu(self.enc2(h))
        return self.enc3(h)

    def decode(self, latent: torch.Tensor) -> torch.Tensor:
        if latent.ndim != 3 or latent.shape[0] != self.latent_channels:
            raise ValueError(
                f"decode expects ({self.latent_channels}, h, w), "
                f"got {tuple(latent.shape)}"
            )
        h = F.silu(self.dec1(latent))
        h = F.silu(self.dec2(h))
        return 0.5 + self.dec3(h)

    # -- conditioning ---------------------------------------------------

    def embedding(self, tag: str) -> torch.Tensor:
        if tag not in TEXT_TAGS:
            raise KeyError(f"unknown text tag {tag!r}, expected one of {TEXT_TAGS}")
        return self.text_table[TEXT_TAGS.index(tag)]

    # -- denoiser -------------------------------------------------------

    def injection_points(self) -> dict[str, tuple[int, int]]:
        """Site name -> (d_in, d_out) of the 1x1 mix it shadows."""
        return {site: (self.width, self.width) for site in SITES}

    def _mix(self, site: str, x: torch.Tensor, adapters) -> torch.Tensor:
        y = self.mixes[site](x)
        if adapters is not None:
            delta = adapters.delta(site, x)
            if delta is not None:
                y = y + delta
        return y

    def denoise(self, latent: torch.Tensor, t: int, cond: torch.Tensor,
                adapters=None) -> torch.Tensor:
        """Predict the noise component of `latent` at timestep t.

        `cond` is a (text_dim,) embedding; `adapters`, when given, must
        expose delta(site, x) returning an additive update or None.
        """
        if latent.ndim != 3 or latent.shape[0] != self.latent_channels:
            raise ValueError(
                f"denoise expects ({self.latent_channels}, h, w), "
                f"got {tuple(latent.shape)}"
            )
        if latent.shape[1] % 4 or latent.shape[2] % 4:
            raise ValueError(
                f"latent size must be divisible by 4, got {tuple(latent.shape[1:])}"
            )
        dtype = latent.dtype
        tb = self.t_proj(time_features(t, self.width).to(dtype))
        cb = self.cond_proj(cond.to(dtype))
        h = F.silu(self.stem(latent))
        h = h + tb[:, None, None] + cb[:, None, None]
        h0 = self._mix("stem", h, adapters)
        d1 = self._mix("down1", F.silu(self.down1(h0)), adapters)
        d2 = self._mix("down2", F.silu(self.down2(d1)), adapters)
        m = self._mix("mid1", F.silu(self.mid_a(d2)), adapters)
        m = self._mix("mid2", F.silu(self.mid_b(m)), adapters)
        u1 = _upsample2(m)
        u1 = self._mix("up1", F.silu(self.up1(u1) + d1), adapters)
        u2 = _upsample2(u1)
        u2 = self._mix("up2", F.silu(self.up2(u2) + h0), adapters)
        h = self._mix("head", F.silu(self.head_conv(u2)), adapters)
        return self.out_conv(h)

    def checksum(self) -> str:
        return parameter_checksum(self)
