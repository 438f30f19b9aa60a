"""Noise schedule and the diffusion-process arithmetic built on it.

All coefficients are plain Python floats derived from float64 schedule
arrays, so the step functions work unchanged on numpy arrays and torch
tensors of any dtype.  Timesteps are 1-based: t ranges over 1..T.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class NoiseSchedule:
    """Variance schedule with cached per-step products.

    betas[t-1] is the step-t variance increment; alpha_bars[t-1] the
    cumulative product of (1 - beta) up to and including step t.
    """

    betas: np.ndarray
    alphas: np.ndarray = field(init=False)
    alpha_bars: np.ndarray = field(init=False)
    sigmas: np.ndarray = field(init=False)

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=np.float64)
        if betas.ndim != 1 or betas.size == 0:
            raise ValueError("betas must be a non-empty 1-D array")
        if betas.min() <= 0.0 or betas.max() >= 1.0:
            raise ValueError("betas must lie strictly inside (0, 1)")
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "alphas", 1.0 - betas)
        object.__setattr__(self, "alpha_bars", np.cumprod(1.0 - betas))
        object.__setattr__(self, "sigmas", np.sqrt(betas))

    @property
    def T(self) -> int:
        return int(self.betas.size)

    def _check_t(self, t: int) -> int:
        t = int(t)
        if not 1 <= t <= self.T:
            raise ValueError(f"timestep must be in 1..{self.T}, got {t}")
        return t

    def beta(self, t: int) -> float:
        return float(self.betas[self._check_t(t) - 1])

    def alpha(self, t: int) -> float:
        return float(self.alphas[self._check_t(t) - 1])

    def alpha_bar(self, t: int) -> float:
        return float(self.alpha_bars[self._check_t(t) - 1])

    def sigma(self, t: int) -> float:
        return float(self.sigmas[self._check_t(t) - 1])


def make_schedule(T: int = 1000, beta_start: float = 1e-4,
                  beta_end: float = 0.02) -> NoiseSchedule:
    """Linear variance schedule from beta_start at t=1 to beta_end at t=T."""
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    return NoiseSchedule(np.linspace(beta_start, beta_end, T, dtype=np.float64))


def forward_step(x_prev, t: int, noise, schedule: NoiseSchedule):
    """One forward noising step: scale by sqrt(1-beta_t), add sigma_t noise."""
    beta = schedule.beta(t)
    return float(np.sqrt(1.0 - beta)) * x_prev + float(np.sqrt(beta)) * noise


def forward_diffuse(x0, t: int, noise, schedule: NoiseSchedule):
    """Jump straight from x0 to step t using the cumulative products."""
    abar = schedule.alpha_bar(t)
    return float(np.sqrt(abar)) * x0 + float(np.sqrt(1.0 - abar)) * noise


def reverse_mean(x_t, t: int, eps_pred, schedule: NoiseSchedule):
    """Posterior mean of the reverse step given a noise prediction."""
    abar = schedule.alpha_bar(t)
    if abar >= 1.0:
        raise ValueError("alpha_bar must be < 1 for the reverse mean")
    coef = schedule.beta(t) / float(np.sqrt(1.0 - abar))
    return (x_t - coef * eps_pred) / float(np.sqrt(schedule.alpha(t)))


def latent_step(z, eps_pred):
    """Single-step latent refinement: subtract the predicted noise as is.

    Deliberately schedule-free; the schedule-weighted posterior mean above
    is available separately for multi-step sampling.
    """
    return z - eps_pred
