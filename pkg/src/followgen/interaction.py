"""Leader/spacing feature encoding and cross-attention interaction modeling.

The block produces the fixed-width condition vector c that guides denoising:
per-stream GRU + linear encoders feed learned channel-pooling into key/value
sequences, the encoded follower history supplies the query, and a multi-head
cross-attention transformer layer (residual + layer norm + feed-forward)
is time-averaged into c.
"""

import math
from typing import Tuple

import torch
import torch.nn as nn

from .config import ModelConfig


def scaled_dot_attention(q: torch.Tensor, k: torch.Tensor,
                         v: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
    """q, k, v: (..., T, d). Returns (output, attention weights)."""
    d_k = q.shape[-1]
    scores = q @ k.transpose(-2, -1) / math.sqrt(d_k)
    weights = torch.softmax(scores, dim=-1)
    return weights @ v, weights


class StreamKV(nn.Module):
    """Per-stream GRU + linear encoders pooled channelwise into K/V sequences."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        w = cfg.embed_width
        self.gru_x = nn.GRU(2, cfg.gru_hidden, batch_first=True)
        self.gru_v = nn.GRU(1, cfg.gru_hidden, batch_first=True)
        self.gru_dx = nn.GRU(2, cfg.gru_hidden, batch_first=True)
        self.lin_x = nn.Linear(cfg.gru_hidden, w)
        self.lin_v = nn.Linear(cfg.gru_hidden, w)
        self.lin_dx = nn.Linear(cfg.gru_hidden, w)
        # learned channel pooling: concat width 3w back to w, time axis kept
        self.pool_k = nn.Linear(3 * w, w)
        self.pool_v = nn.Linear(3 * w, w)

    def forward(self, x_lea: torch.Tensor, v_lea: torch.Tensor,
                dx: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        zx = self.lin_x(self.gru_x(x_lea)[0])
        zv = self.lin_v(self.gru_v(v_lea)[0])
        zd = self.lin_dx(self.gru_dx(dx)[0])
        cat = torch.cat([zx, zv, zd], dim=-1)
        return self.pool_k(cat), self.pool_v(cat)


class CrossAttentionBlock(nn.Module):
    """Multi-head cross-attention with residuals, layer norm and feed-forward."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        w = cfg.embed_width
        self.n_heads = cfg.n_heads
        self.head_dim = w // cfg.n_heads
        self.w_que = nn.Linear(w, w)
        self.w_key = nn.Linear(w, w)
        self.w_val = nn.Linear(w, w)
        self.w_out = nn.Linear(w, w)
        self.norm1 = nn.LayerNorm(w)
        self.norm2 = nn.LayerNorm(w)
        self.ffn = nn.Sequential(
            nn.Linear(w, cfg.ffn_width), nn.GELU(), nn.Linear(cfg.ffn_width, w))

    def _split(self, z: torch.Tensor) -> torch.Tensor:
        *lead, t, _ = z.shape
        return z.view(*lead, t, self.n_heads, self.head_dim).transpose(-3, -2)

    def _merge(self, z: torch.Tensor) -> torch.Tensor:
        z = z.transpose(-3, -2)
        *lead, t, h, d = z.shape
        return z.reshape(*lead, t, h * d)

    def forward(self, q_seq: torch.Tensor, k_seq: torch.Tensor,
                v_seq: torch.Tensor,
                return_weights: bool = False):
        q = self._split(self.w_que(q_seq))
        k = self._split(self.w_key(k_seq))
        v = self._split(self.w_val(v_seq))
        attn, weights = scaled_dot_attention(q, k, v)
        z = self.norm1(q_seq + self.w_out(self._merge(attn)))
        z = self.norm2(z + self.ffn(z))
        if return_weights:
            return z, weights
        return z


class InteractionEncoder(nn.Module):
    """Full interaction pipeline from raw streams to the condition vector c."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.kv = StreamKV(cfg)
        self.q_proj = nn.Linear(cfg.history_out_width, cfg.embed_width)
        self.block = CrossAttentionBlock(cfg)

    def forward(self, z_his: torch.Tensor, x_lea: torch.Tensor,
                v_lea: torch.Tensor, dx: torch.Tensor) -> torch.Tensor:
        k_seq, v_seq = self.kv(x_lea, v_lea, dx)
        q_seq = self.q_proj(z_his)
        z_cat = self.block(q_seq, k_seq, v_seq)
        return z_cat.mean(dim=-2)  # time pooling to fixed width


class LinearInteractionEncoder(nn.Module):
    """Ablation stand-in: the cross-attention block is swapped for one linear
    layer over the same query/key/value sequences; the per-stream encoders and
    the query projection are kept intact."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.kv = StreamKV(cfg)
        self.q_proj = nn.Linear(cfg.history_out_width, cfg.embed_width)
        self.proj = nn.Linear(3 * cfg.embed_width, cfg.embed_width)

    def forward(self, z_his: torch.Tensor, x_lea: torch.Tensor,
                v_lea: torch.Tensor, dx: torch.Tensor) -> torch.Tensor:
        k_seq, v_seq = self.kv(x_lea, v_lea, dx)
        q_seq = self.q_proj(z_his)
        cat = torch.cat([q_seq, k_seq, v_seq], dim=-1)
        return self.proj(cat).mean(dim=-2)
