"""Scaled dot-product attention and the token/grid reshapes."""

import math

import pytest
import torch

from satsr.attention import from_tokens, multihead_attention, to_tokens


def _qkv(nq=5, nk=7, width=8, seed=0):
    gen = torch.Generator().manual_seed(seed)
    q = torch.randn(nq, width, generator=gen)
    k = torch.randn(nk, width, generator=gen)
    v = torch.randn(nk, width, generator=gen)
    return q, k, v


def test_weight_rows_sum_to_one():
    q, k, v = _qkv()
    _, w = multihead_attention(q, k, v, 4, return_weights=True)
    assert w.shape == (4, 5, 7)
    assert torch.allclose(w.sum(dim=-1), torch.ones(4, 5), atol=1e-6)
    assert (w >= 0).all()


def test_single_token_weights_are_exactly_one():
    q, k, v = _qkv(nq=3, nk=1)
    out, w = multihead_attention(q, k, v, 4, return_weights=True)
    assert torch.equal(w, torch.ones(4, 3, 1))
    # every query attends to the only value
    assert torch.allclose(out, v.expand(3, -1), atol=1e-7)


def test_single_head_matches_manual_formula():
    q, k, v = _qkv(width=6)
    out = multihead_attention(q, k, v, 1)
    manual = torch.softmax(q @ k.T / math.sqrt(6.0), dim=-1) @ v
    assert torch.allclose(out, manual, atol=1e-9)


def test_multi_head_matches_per_head_computation():
    q, k, v = _qkv(width=8)
    out = multihead_attention(q, k, v, 2)
    d = 4
    parts = []
    for h in range(2):
        qs, ks, vs = (x[:, h * d:(h + 1) * d] for x in (q, k, v))
        parts.append(torch.softmax(qs @ ks.T / math.sqrt(d), dim=-1) @ vs)
    assert torch.allclose(out, torch.cat(parts, dim=1), atol=1e-9)


def test_query_permutation_equivariance():
    q, k, v = _qkv()
    perm = torch.tensor([4, 2, 0, 1, 3])
    out = multihead_attention(q, k, v, 2)
    out_perm = multihead_attention(q[perm], k, v, 2)
    assert torch.allclose(out_perm, out[perm], atol=0)


def test_shape_errors():
    q, k, v = _qkv(width=8)
    with pytest.raises(ValueError, match="divisible"):
        multihead_attention(q, k, v, 3)
    with pytest.raises(ValueError):
        multihead_attention(q, k[:, :4], v, 2)
    with pytest.raises(ValueError):
        multihead_attention(q, k, v[:3], 2)


def test_token_grid_round_trip():
    grid = torch.arange(24.0).reshape(2, 3, 4)
    tokens = to_tokens(grid)
    assert tokens.shape == (12, 2)
    assert torch.equal(from_tokens(tokens, 3, 4), grid)
    # token i is the channel vector at flattened position i
    assert torch.equal(tokens[0], grid[:, 0, 0])
    assert torch.equal(tokens[5], grid[:, 1, 1])
