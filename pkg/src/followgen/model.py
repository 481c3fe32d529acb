"""FollowGen model assembly: history encoder, interaction condition, denoiser.

All networks run in float64 on CPU for deterministic, tight-tolerance numerics
at desk scale. History inputs are ego-frame windows scaled by pos_scale /
speed_scale; the diffused future trajectory is whitened per future timestep
with dataset statistics fitted at training time (fit_future_stats), so the
forward process operates on O(1) values whatever the driving speeds are.
"""

from dataclasses import dataclass
from typing import List, Sequence

import numpy as np
import torch
import torch.nn as nn

from .config import ModelConfig
from .data import SampleWindow
from .denoiser import UNet1d
from .history import (HistoryEncoder, LinearHistoryEncoder, NoiseScale,
                      compute_noise_scale)
from .interaction import InteractionEncoder, LinearInteractionEncoder

FUT_SD_FLOOR_M = 0.1  # keeps whitening finite on degenerate dimensions
REF_ACCEL_FIT_FRAMES = 5


def kinematic_reference(w: SampleWindow, t_fut: int) -> np.ndarray:
    """Constant-acceleration extrapolation of the follower history, in meters.

    Speed comes from finite differences of the last history positions and
    acceleration from a linear fit of the recent speeds; the reference is
    integrated forward along the current heading with speed clamped at zero.
    The diffusion model learns the residual around this trajectory, which
    keeps the target centered and small at every horizon.
    """
    dt = w.dt
    vel = np.diff(w.x_fol_his, axis=0) / dt
    speed = np.linalg.norm(vel, axis=1)
    n = min(REF_ACCEL_FIT_FRAMES, len(speed))
    t = np.arange(n) * dt
    accel = np.polyfit(t, speed[-n:], 1)[0] if n > 1 else 0.0
    norm = np.linalg.norm(vel[-1])
    heading = vel[-1] / norm if norm > 1e-12 else np.array([1.0, 0.0])
    s = speed[-1] + accel * dt * np.arange(1, t_fut + 1)
    s = np.maximum(s, 0.0)
    arc = np.cumsum(s) * dt
    return w.x_fol_his[-1][None, :] + arc[:, None] * heading[None, :]


@dataclass
class Batch:
    """Stacked ego-frame windows (all float64 tensors)."""
    x_fol_his: torch.Tensor    # (B, T_his, 2) / pos_scale
    v_fol_his: torch.Tensor    # (B, T_his, 1) / speed_scale
    x_lea_his: torch.Tensor    # (B, T_his, 2) / pos_scale
    v_lea_his: torch.Tensor    # (B, T_his, 1) / speed_scale
    dx_his: torch.Tensor       # (B, T_his, 2) / pos_scale
    x_fol_fut_m: torch.Tensor  # (B, T_fut, 2) in meters
    x_lea_fut_m: torch.Tensor  # (B, T_fut, 2) in meters
    ref_fut_m: torch.Tensor    # (B, T_fut, 2) kinematic reference, meters

    def __len__(self) -> int:
        return self.x_fol_his.shape[0]


def make_batch(windows: Sequence[SampleWindow], cfg: ModelConfig) -> Batch:
    def stack(get):
        return torch.from_numpy(np.stack([get(w) for w in windows]).astype(np.float64))

    ps, ss = cfg.pos_scale, cfg.speed_scale
    t_fut = windows[0].x_fol_fut.shape[0]
    return Batch(
        x_fol_his=stack(lambda w: w.x_fol_his) / ps,
        v_fol_his=stack(lambda w: w.v_fol_his) / ss,
        x_lea_his=stack(lambda w: w.x_lea_his) / ps,
        v_lea_his=stack(lambda w: w.v_lea_his) / ss,
        dx_his=stack(lambda w: w.dx_his) / ps,
        x_fol_fut_m=stack(lambda w: w.x_fol_fut),
        x_lea_fut_m=stack(lambda w: w.x_lea_fut),
        ref_fut_m=stack(lambda w: kinematic_reference(w, t_fut)),
    )


class FollowGen(nn.Module):
    """End-to-end model; the `variant` config selects the ablation wiring."""

    def __init__(self, cfg: ModelConfig, t_his: int, t_fut: int):
        super().__init__()
        self.cfg = cfg
        self.variant = cfg.variant
        if cfg.variant == "no_locattn_fft":
            self.history = LinearHistoryEncoder(cfg, t_his)
        else:
            self.history = HistoryEncoder(cfg, t_his)
        if cfg.variant == "no_cross_attention":
            self.interaction = LinearInteractionEncoder(cfg)
        else:
            self.interaction = InteractionEncoder(cfg)
        self.denoiser = UNet1d(cfg, d=2)
        # per-future-timestep whitening statistics, fitted on the training set
        self.fut_mu = nn.Parameter(torch.zeros(t_fut, 2), requires_grad=False)
        self.fut_sd = nn.Parameter(torch.ones(t_fut, 2), requires_grad=False)
        self.double()

    def fit_future_stats(self, x_fol_fut_m: torch.Tensor,
                         ref_fut_m: torch.Tensor):
        """Fit whitening statistics from training futures (B, T_fut, 2).

        The diffused variable is the residual between the true future and the
        per-window kinematic reference; subtracting that reference centers the
        target so it matches the zero-mean sampling prior.
        """
        res = x_fol_fut_m - ref_fut_m
        with torch.no_grad():
            self.fut_mu.copy_(res.mean(dim=0))
            self.fut_sd.copy_(res.std(dim=0, unbiased=False)
                              .clamp_min(FUT_SD_FLOOR_M))

    def to_model_space(self, x_m: torch.Tensor,
                       ref_m: torch.Tensor) -> torch.Tensor:
        return (x_m - ref_m - self.fut_mu) / self.fut_sd

    def to_meters(self, x: torch.Tensor, ref_m: torch.Tensor) -> torch.Tensor:
        return x * self.fut_sd + self.fut_mu + ref_m

    def encode(self, batch: Batch):
        """Returns (z_his, scale, c) for a batch of windows.

        Under the no_noise_scaling variant sigma^2 is forced to 1 (isotropic).
        """
        z_his = self.history(batch.x_fol_his, batch.v_fol_his)
        scale = compute_noise_scale(z_his)
        if self.variant == "no_noise_scaling":
            scale = NoiseScale(sigma2=torch.ones_like(scale.sigma2),
                               mu=scale.mu)
        c = self.interaction(z_his, batch.x_lea_his, batch.v_lea_his,
                             batch.dx_his)
        return z_his, scale, c

    def predict_noise(self, x_k: torch.Tensor, k: torch.Tensor,
                      c: torch.Tensor) -> torch.Tensor:
        return self.denoiser(x_k, k, c)


def build_model(cfg: ModelConfig, t_his: int, t_fut: int, seed: int) -> FollowGen:
    """Construct a model with deterministic parameter initialization."""
    torch.manual_seed(seed)
    return FollowGen(cfg, t_his, t_fut)


def named_parameter_arrays(model: nn.Module) -> List[tuple]:
    """Flat (name, numpy array) view of the parameters, checkpoint order."""
    return [(name, p.detach().numpy().copy())
            for name, p in model.named_parameters()]
