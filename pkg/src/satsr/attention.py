"""Plain multi-head scaled dot-product attention over token matrices.

Written out explicitly (no fused kernels) so the math stays inspectable
and bitwise reproducible on a single thread.
"""

from __future__ import annotations

import math

import torch


def multihead_attention(q: torch.Tensor, k: torch.Tensor, v: torch.Tensor,
                        n_heads: int, return_weights: bool = False):
    """softmax(QK^T/sqrt(d))V per head, heads re-concatenated.

    q: (Nq, width), k/v: (Nk, width); width must divide by n_heads.
    Returns (Nq, width), plus the (n_heads, Nq, Nk) weights on request.
    """
    nq, width = q.shape
    nk = k.shape[0]
    if width % n_heads:
        raise ValueError(f"width {width} not divisible by {n_heads} heads")
    if k.shape != (nk, width) or v.shape != (nk, width):
        raise ValueError(
            f"k/v must be (Nk, {width}), got {tuple(k.shape)} and {tuple(v.shape)}"
        )
    d = width // n_heads

    def heads(x, n):
        return x.reshape(n, n_heads, d).permute(1, 0, 2)  # (n_heads, N, d)

    qh, kh, vh = heads(q, nq), heads(k, nk), heads(v, nk)
    scores = qh @ kh.transpose(1, 2) / math.sqrt(d)
    weights = torch.softmax(scores, dim=-1)
    out = weights @ vh  # (n_heads, Nq, d)
    out = out.permute(1, 0, 2).reshape(nq, width)
    if return_weights:
        return out, weights
    return out


def to_tokens(grid: torch.Tensor) -> torch.Tensor:
    """(C, H, W) feature grid -> (H*W, C) token matrix."""
    c = grid.shape[0]
    return grid.reshape(c, -1).T


def from_tokens(tokens: torch.Tensor, h: int, w: int) -> torch.Tensor:
    """(H*W, C) tokens back to a (C, H, W) grid."""
    return tokens.T.reshape(tokens.shape[1], h, w)
