"""Conditional 1-D U-Net predicting the per-step noise of a future trajectory."""

import math
from typing import Sequence

import torch
import torch.nn as nn

from .config import ModelConfig


class NumericInputError(ValueError):
    pass


def sinusoidal_embedding(k: torch.Tensor, width: int) -> torch.Tensor:
    """Standard sinusoidal embedding of integer diffusion steps, (B,) -> (B, width)."""
    half = width // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float64) / max(half - 1, 1))
    args = k.to(torch.float64)[:, None] * freqs[None, :]
    emb = torch.cat([torch.sin(args), torch.cos(args)], dim=-1)
    if emb.shape[-1] < width:
        emb = torch.cat([emb, torch.zeros(len(k), width - emb.shape[-1], dtype=emb.dtype)], dim=-1)
    return emb


def _norm_groups(channels: int) -> int:
    for g in (8, 4, 2):
        if channels % g == 0:
            return g
    return 1


def _conv_block(c_in: int, c_out: int, kernel: int, stride: int = 1) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv1d(c_in, c_out, kernel, stride=stride, padding=kernel // 2),
        nn.GroupNorm(_norm_groups(c_out), c_out),
        nn.GELU(),
    )


class UNet1d(nn.Module):
    """Down/up convolutional path over the time axis with skip connections.

    The condition vector is projected, broadcast along time, and concatenated
    after the first convolutional block; the sinusoidal step embedding is
    projected and added there as well. Inputs of any length are zero-padded to
    a multiple of 2^(depth-1) and cropped on output.
    """

    def __init__(self, cfg: ModelConfig, d: int = 2):
        super().__init__()
        ch: Sequence[int] = cfg.unet_channels
        k = cfg.unet_kernel
        self.depth = len(ch) - 1
        self.block1 = _conv_block(d, ch[0], k)
        self.t_embed_width = cfg.time_embed_width
        self.t_proj = nn.Linear(cfg.time_embed_width, ch[0])
        self.c_proj = nn.Linear(cfg.embed_width, cfg.cond_channels)
        c0 = ch[0] + cfg.cond_channels
        emb_in = cfg.time_embed_width + cfg.embed_width
        downs, down_embs = [], []
        widths = [c0] + list(ch[1:])
        for c_in, c_out in zip(widths[:-1], widths[1:]):
            downs.append(nn.Sequential(
                nn.Conv1d(c_in, c_out, k, stride=2, padding=k // 2),
                nn.GroupNorm(_norm_groups(c_out), c_out),
                nn.GELU(),
            ))
            down_embs.append(nn.Linear(emb_in, c_out))
        self.downs = nn.ModuleList(downs)
        self.down_embs = nn.ModuleList(down_embs)
        ups, merges, up_embs = [], [], []
        rev = list(reversed(widths))  # e.g. (128, 64, 32, 16, c0)
        for i, (c_in, c_skip) in enumerate(zip(rev[:-1], rev[1:])):
            # the last up lands on the post-injection skip; shrink back to ch[0]
            c_out = ch[0] if i == len(rev) - 2 else c_skip
            ups.append(nn.ConvTranspose1d(c_in, c_out, 4, stride=2, padding=1))
            merges.append(_conv_block(c_out + c_skip, c_out, k))
            up_embs.append(nn.Linear(emb_in, c_out))
        self.ups = nn.ModuleList(ups)
        self.merges = nn.ModuleList(merges)
        self.up_embs = nn.ModuleList(up_embs)
        self.head = nn.Conv1d(ch[0], d, 1)

    def forward(self, x_k: torch.Tensor, k: torch.Tensor,
                c: torch.Tensor) -> torch.Tensor:
        """x_k: (B, T, D), k: (B,) step indices, c: (B, embed) -> (B, T, D)."""
        if not (torch.isfinite(x_k).all() and torch.isfinite(c).all()):
            raise NumericInputError("non-finite denoiser input")
        b, t, d = x_k.shape
        mult = 1 << self.depth
        pad = (-t) % mult
        left = pad // 2
        h = x_k.transpose(1, 2)  # (B, D, T)
        if pad:
            h = nn.functional.pad(h, (left, pad - left))
        h = self.block1(h)
        temb = sinusoidal_embedding(k, self.t_embed_width).to(x_k.dtype)
        h = h + self.t_proj(temb)[:, :, None]
        cond = self.c_proj(c)[:, :, None].expand(-1, -1, h.shape[-1])
        h = torch.cat([h, cond], dim=1)
        # the step/condition pair is re-injected additively at every level so
        # guidance survives the downsampling bottleneck
        emb = torch.cat([temb, c], dim=-1)
        skips = [h]
        for down, proj in zip(self.downs, self.down_embs):
            h = down(h) + proj(emb)[:, :, None]
            skips.append(h)
        skips.pop()
        for up, merge, proj in zip(self.ups, self.merges, self.up_embs):
            h = up(h)
            h = merge(torch.cat([h, skips.pop()], dim=1)) + proj(emb)[:, :, None]
        out = self.head(h)
        if pad:
            out = out[:, :, left:left + t]
        return out.transpose(1, 2)
