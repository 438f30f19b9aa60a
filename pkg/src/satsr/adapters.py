"""Low-rank adapters over the frozen denoiser's mix sites.

Two trainable branches share the frozen backbone: a pixel branch adapting
the outer (fine-detail) sites, and a pixel+semantic branch adapting those
same sites plus the inner (coarse/semantic) ones.  During the second
denoiser pass both branches' deltas stack additively, so semantic-branch
gradients also reach the pixel-site adapters of its own set.

Each adapter keeps the LoRA form: output = W·x + (alpha/r)·up(down(x)),
with `down` drawn from a seeded Gaussian and `up` starting at zero, which
makes a freshly initialized model bit-identical to the frozen backbone.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .backbone import SITES, FrozenBackbone
from .serialization import read_payload, write_payload

PIXEL_SITES = ("stem", "down1", "up2", "head")
SEMANTIC_SITES = ("down2", "mid1", "mid2", "up1")

BRANCH_SITES = {
    "pixel": PIXEL_SITES,
    # superset by contract: the semantic branch adapts the pixel sites too
    "pixel+semantic": tuple(s for s in SITES),
}

DEFAULT_RANK = 4


class LowRankAdapter(nn.Module):
    """Rank-r additive update for one named injection site."""

    def __init__(self, site: str, d_in: int, d_out: int, rank: int,
                 alpha: float | None = None):
        super().__init__()
        if rank < 1:
            raise ValueError(f"rank must be >= 1, got {rank}")
        if rank > min(d_in, d_out):
            raise ValueError(
                f"rank {rank} exceeds layer dimension min({d_in}, {d_out})"
            )
        self.site = site
        self.rank = rank
        self.alpha = float(alpha if alpha is not None else rank)
        self.scale = self.alpha / rank
        self.down = nn.Parameter(torch.zeros(rank, d_in))
        self.up = nn.Parameter(torch.zeros(d_out, rank))

    def seed_init(self, gen: torch.Generator) -> None:
        d_in = self.down.shape[1]
        with torch.no_grad():
            self.down.normal_(0.0, 1.0 / np.sqrt(d_in), generator=gen)
            self.up.zero_()

    def delta(self, x: torch.Tensor) -> torch.Tensor:
        """Low-rank update for a (d_in, H, W) feature map."""
        mid = F.conv2d(x, self.down.unsqueeze(-1).unsqueeze(-1).to(x.dtype))
        return self.scale * F.conv2d(
            mid, self.up.unsqueeze(-1).unsqueeze(-1).to(x.dtype))


def apply_adapted(W: torch.Tensor, adapter: LowRankAdapter,
                  x: torch.Tensor) -> torch.Tensor:
    """Adapted linear map on plain vectors: W·x + scale·up(down(x))."""
    if W.shape[1] != x.shape[-1] or adapter.down.shape[1] != x.shape[-1]:
        raise ValueError(
            f"shape mismatch: W {tuple(W.shape)}, down "
            f"{tuple(adapter.down.shape)}, x {tuple(x.shape)}"
        )
    base = x @ W.T
    delta = (x @ adapter.down.T.to(x.dtype)) @ adapter.up.T.to(x.dtype)
    return base + adapter.scale * delta


class AdapterSet(nn.Module):
    """One branch's adapters, addressable by site name."""

    def __init__(self, branch: str, adapters: dict[str, LowRankAdapter]):
        super().__init__()
        if branch not in BRANCH_SITES:
            raise ValueError(f"branch must be one of {tuple(BRANCH_SITES)}")
        self.branch = branch
        self.adapters = nn.ModuleDict(adapters)

    def delta(self, site: str, x: torch.Tensor):
        if site not in self.adapters:
            return None
        return self.adapters[site].delta(x)

    def parameter_count(self) -> int:
        return sum(a.rank * (a.down.shape[1] + a.up.shape[0])
                   for a in self.adapters.values())

    def sites(self) -> tuple[str, ...]:
        return tuple(self.adapters.keys())

    def rank_at(self, site: str) -> int | None:
        if site not in self.adapters:
            return None
        return self.adapters[site].rank


def init_adapter_set(backbone: FrozenBackbone, branch: str, rank: int = DEFAULT_RANK,
                     seed: int = 0, alpha: float | None = None) -> AdapterSet:
    """Build a branch's adapter set; same seed gives identical weights."""
    points = backbone.injection_points()
    gen = torch.Generator().manual_seed(seed)
    adapters = {}
    for site in BRANCH_SITES.get(branch, ()):
        d_in, d_out = points[site]
        adapter = LowRankAdapter(site, d_in, d_out, rank, alpha)
        adapter.seed_init(gen)
        adapters[site] = adapter
    return AdapterSet(branch, adapters)


class MergedAdapters:
    """Read-only union of adapter sets; overlapping deltas stack."""

    def __init__(self, sets: list[AdapterSet]):
        ranks: dict[str, int] = {}
        for s in sets:
            for site in s.sites():
                r = s.rank_at(site)
                if site in ranks and ranks[site] != r:
                    raise ValueError(
                        f"site {site!r} has conflicting ranks "
                        f"{ranks[site]} and {r}"
                    )
                ranks.setdefault(site, r)
        self.sets = sets

    def delta(self, site: str, x: torch.Tensor):
        total = None
        for s in self.sets:
            d = s.delta(site, x)
            if d is not None:
                total = d if total is None else total + d
        return total


def dual_branch_forward(backbone: FrozenBackbone, latent: torch.Tensor, t: int,
                        cond: torch.Tensor, pixel_set: AdapterSet,
                        semantic_set: AdapterSet) -> tuple[torch.Tensor, torch.Tensor]:
    """Two denoiser passes sharing one latent.

    Pass 1 applies the pixel branch alone; pass 2 applies the union of
    both branches.  Each pass subtracts its predicted noise from the
    latent; downstream, only the second result is decoded to the output.
    """
    merged = MergedAdapters([pixel_set, semantic_set])
    eps_pix = backbone.denoise(latent, t, cond, pixel_set)
    eps_sem = backbone.denoise(latent, t, cond, merged)
    return latent - eps_pix, latent - eps_sem


def save_adapter_set(path, adapter_set: AdapterSet) -> None:
    arrays = []
    sites = []
    for site, adapter in adapter_set.adapters.items():
        sites.append({"site": site, "rank": adapter.rank, "alpha": adapter.alpha})
        arrays.append((f"{site}.down",
                       adapter.down.detach().numpy().astype("<f4")))
        arrays.append((f"{site}.up",
                       adapter.up.detach().numpy().astype("<f4")))
    write_payload(path, {"kind": "adapter-set", "branch": adapter_set.branch,
                         "sites": sites}, arrays)


def load_adapter_set(path) -> AdapterSet:
    meta, arrays = read_payload(path)
    if meta.get("kind") != "adapter-set":
        raise ValueError(f"{path}: not an adapter-set checkpoint")
    adapters = {}
    for spec in meta["sites"]:
        site = spec["site"]
        down = torch.from_numpy(arrays[f"{site}.down"].astype(np.float32))
        up = torch.from_numpy(arrays[f"{site}.up"].astype(np.float32))
        adapter = LowRankAdapter(site, down.shape[1], up.shape[0],
                                 int(spec["rank"]), float(spec["alpha"]))
        with torch.no_grad():
            adapter.down.copy_(down)
            adapter.up.copy_(up)
        adapters[site] = adapter
    return AdapterSet(meta["branch"], adapters)
