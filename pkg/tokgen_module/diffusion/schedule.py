"""
Linear-beta DDPM noise schedule
"""

from __future__ import annotations

from typing import Optional

import torch
from torch import Tensor


def _extract(table: Tensor, t: Tensor, ndim: int) -> Tensor:
    return table.to(t.device)[t].reshape(-1, *([1] * (ndim - 1)))


class NoiseSchedule:
    """
    Forward process q(x_t | x_0) and the ancestral reverse step.

    Tables are computed in float64 and stored in float32.
    """

    def __init__(self, timesteps: int, beta_start: float, beta_end: float):
        betas = torch.linspace(beta_start, beta_end, timesteps, dtype=torch.float64)
        alphas = 1.0 - betas
        alphas_cumprod = torch.cumprod(alphas, dim=0)
        alphas_cumprod_prev = torch.cat([torch.ones(1, dtype=torch.float64), alphas_cumprod[:-1]])

        self.timesteps = timesteps
        self.betas = betas.float()
        self.alphas_cumprod = alphas_cumprod.float()
        self.sqrt_alphas_cumprod = alphas_cumprod.sqrt().float()
        self.sqrt_one_minus_alphas_cumprod = (1.0 - alphas_cumprod).sqrt().float()
        self.sqrt_recip_alphas_cumprod = (1.0 / alphas_cumprod).sqrt().float()
        self.sqrt_recipm1_alphas_cumprod = (1.0 / alphas_cumprod - 1.0).sqrt().float()
        self.posterior_variance = (
            betas * (1.0 - alphas_cumprod_prev) / (1.0 - alphas_cumprod)
        ).float()
        self.posterior_mean_coef1 = (
            betas * alphas_cumprod_prev.sqrt() / (1.0 - alphas_cumprod)
        ).float()
        self.posterior_mean_coef2 = (
            (1.0 - alphas_cumprod_prev) * alphas.sqrt() / (1.0 - alphas_cumprod)
        ).float()

    def q_sample(self, x0: Tensor, t: Tensor, noise: Tensor) -> Tensor:
        return (
            _extract(self.sqrt_alphas_cumprod, t, x0.ndim) * x0
            + _extract(self.sqrt_one_minus_alphas_cumprod, t, x0.ndim) * noise
        )

    def predict_x0(self, x_t: Tensor, t: Tensor, eps: Tensor) -> Tensor:
        return (
            _extract(self.sqrt_recip_alphas_cumprod, t, x_t.ndim) * x_t
            - _extract(self.sqrt_recipm1_alphas_cumprod, t, x_t.ndim) * eps
        )

    def p_sample(self, x_t: Tensor, t: int, eps: Tensor, noise: Optional[Tensor]) -> Tensor:
        """x_{t-1} from x_t and predicted noise; ``noise`` is ignored at t = 0."""
        steps = torch.full((x_t.shape[0],), t, dtype=torch.long, device=x_t.device)
        x0 = self.predict_x0(x_t, steps, eps).clamp(-1.0, 1.0)
        mean = (
            _extract(self.posterior_mean_coef1, steps, x_t.ndim) * x0
            + _extract(self.posterior_mean_coef2, steps, x_t.ndim) * x_t
        )
        if t == 0 or noise is None:
            return mean
        return mean + _extract(self.posterior_variance, steps, x_t.ndim).sqrt() * noise
