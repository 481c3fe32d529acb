"""Follower history encoding (GRU + location attention + FFT) and noise scaling."""

from dataclasses import dataclass
from typing import Optional, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from .config import ModelConfig


class NumericInputError(ValueError):
    pass


@dataclass
class NoiseScale:
    """Per-dimension variance of the scaled noise distribution.

    sigma2 = softplus(mu) where mu is the time-mean of the encoded history;
    the diagonal covariance is only ever represented by this vector.
    """
    sigma2: torch.Tensor  # (..., D), strictly positive
    mu: torch.Tensor      # (..., D)


def location_attention(z_gru: torch.Tensor, w0: torch.Tensor,
                       proj: nn.Linear) -> Tuple[torch.Tensor, torch.Tensor]:
    """Time-axis softmax re-weighting of GRU features.

    z_gru: (B, T, H); w0: (T, 1). Returns (z_loc (B, T, H), w1 (B, T, 1)).
    """
    scores = proj(z_gru * w0)              # (B, T, 1)
    w1 = torch.softmax(scores, dim=-2)
    return w1 * z_gru, w1


def fft_embed(z: torch.Tensor) -> torch.Tensor:
    """DFT along the time axis; real and imaginary parts concatenated channelwise.

    z: (..., T, C) real -> (..., T, 2C) real.
    """
    spec = torch.fft.fft(z, dim=-2)
    return torch.cat([spec.real, spec.imag], dim=-1)


class HistoryEncoder(nn.Module):
    """GRU -> location attention -> linear -> FFT -> linear over follower history."""

    def __init__(self, cfg: ModelConfig, t_his: int):
        super().__init__()
        self.gru = nn.GRU(3, cfg.gru_hidden, num_layers=cfg.gru_layers,
                          batch_first=True)
        w0 = torch.ones(t_his, 1)
        if cfg.learnable_w0:
            self.w0 = nn.Parameter(w0)
        else:
            self.register_buffer("w0", w0)
        self.attn_proj = nn.Linear(cfg.gru_hidden, 1)
        self.proj1 = nn.Linear(cfg.gru_hidden, cfg.attn_proj_width)
        self.proj2 = nn.Linear(2 * cfg.attn_proj_width, cfg.history_out_width)

    def forward(self, x_his: torch.Tensor, v_his: torch.Tensor) -> torch.Tensor:
        """x_his: (B, T, 2), v_his: (B, T, 1) -> (B, T, H'') encoded history."""
        z_in = torch.cat([x_his, v_his], dim=-1)
        if not torch.isfinite(z_in).all():
            raise NumericInputError("non-finite history input")
        z_gru, _ = self.gru(z_in)
        z_loc, _ = location_attention(z_gru, self.w0, self.attn_proj)
        z = self.proj1(z_loc)
        z = fft_embed(z)
        return self.proj2(z)


class LinearHistoryEncoder(nn.Module):
    """Ablation stand-in: a single per-timestep linear layer."""

    def __init__(self, cfg: ModelConfig, t_his: int):
        super().__init__()
        self.proj = nn.Linear(3, cfg.history_out_width)

    def forward(self, x_his: torch.Tensor, v_his: torch.Tensor) -> torch.Tensor:
        z_in = torch.cat([x_his, v_his], dim=-1)
        if not torch.isfinite(z_in).all():
            raise NumericInputError("non-finite history input")
        return self.proj(z_in)


def compute_noise_scale(z_his: torch.Tensor) -> NoiseScale:
    """Reduce the encoded history (..., T, D) to the per-dimension noise variance."""
    mu = z_his.mean(dim=-2)
    return NoiseScale(sigma2=F.softplus(mu), mu=mu)


def sample_scaled_noise(scale: NoiseScale, shape: Tuple[int, ...],
                        generator: Optional[torch.Generator] = None
                        ) -> torch.Tensor:
    """Draw eps = diag(sigma) * eps0 with eps0 standard normal.

    shape is (..., T_fut, D); scale.sigma2 must broadcast against the last
    dimension (per spatial dimension, shared across future timesteps).
    """
    eps0 = torch.randn(shape, generator=generator, dtype=scale.sigma2.dtype)
    return torch.sqrt(scale.sigma2).unsqueeze(-2) * eps0
