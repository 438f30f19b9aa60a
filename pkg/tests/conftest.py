"""Shared fixtures. Everything torch runs single-threaded so results
are bitwise reproducible across invocations."""

import numpy as np
import pytest
import torch

from satsr.config import ExperimentConfig
from satsr.losses import FeatureExtractor
from satsr.synth import SynthConfig, synth_scene

torch.set_num_threads(1)

# smallest LR tile the full latent pipeline accepts (x3 up, /8 encode,
# /4 inside the denoiser)
TEST_LR_SIZE = 32


@pytest.fixture(scope="session")
def extractor():
    return FeatureExtractor(seed=29)


@pytest.fixture(scope="session")
def small_pair():
    return synth_scene(7, SynthConfig(lr_size=TEST_LR_SIZE))


@pytest.fixture(scope="session")
def small_pairs():
    cfg = SynthConfig(lr_size=TEST_LR_SIZE)
    return [synth_scene(seed, cfg) for seed in (7, 8)]


@pytest.fixture(scope="session")
def default_model():
    """Read-only model at initialization; never train against this."""
    from satsr.model import SuperResolver

    return SuperResolver(ExperimentConfig())


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


def central_difference(f, x: torch.Tensor, eps: float = 1e-6) -> torch.Tensor:
    """Coordinate-wise central finite differences of a scalar function."""
    flat = x.detach().clone().reshape(-1)
    grad = torch.zeros_like(flat)
    with torch.no_grad():
        for i in range(flat.numel()):
            orig = flat[i].item()
            flat[i] = orig + eps
            hi = float(f(flat.reshape(x.shape)))
            flat[i] = orig - eps
            lo = float(f(flat.reshape(x.shape)))
            flat[i] = orig
            grad[i] = (hi - lo) / (2.0 * eps)
    return grad.reshape(x.shape)
