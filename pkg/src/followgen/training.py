"""Three-part training objective and the optimization loop with checkpointing."""

import json
import os
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
import torch

from .checkpoint import (load_checkpoint, restore_model, restore_optimizer,
                         restore_rng, save_checkpoint)
from .config import RunConfig
from .data import SampleWindow
from .diffusion import DiffusionSchedule, forward_diffuse, make_schedule, reconstruct_x0
from .history import NoiseScale, sample_scaled_noise
from .model import Batch, FollowGen, build_model, make_batch


class TrainingError(RuntimeError):
    pass


@dataclass
class LossBreakdown:
    l_simple: torch.Tensor
    l_spacing: torch.Tensor
    l_collision: torch.Tensor
    l_total: torch.Tensor
    lambda1: float
    lambda2: float
    delta: float
    dist: float


def loss_simple(eps: torch.Tensor, eps_hat: torch.Tensor) -> torch.Tensor:
    """Mean squared noise-prediction error over all elements."""
    return ((eps - eps_hat) ** 2).mean()


def spacing_penalty(dx_fut: torch.Tensor, delta: float) -> torch.Tensor:
    """Piecewise penalty on the projected longitudinal spacing.

    Zero when the follower stays behind (dx >= 0), quadratic for mild
    overtakes (-delta < dx < 0), linear beyond; continuous and C^1 at -delta.
    """
    neg = -dx_fut
    quad = 0.5 * neg ** 2
    lin = delta * (neg - 0.5 * delta)
    return torch.where(dx_fut >= 0, torch.zeros_like(dx_fut),
                       torch.where(neg < delta, quad, lin))


def loss_spacing(x_lea_fut: torch.Tensor, x_fol_pred: torch.Tensor,
                 e_d: torch.Tensor, delta: float) -> torch.Tensor:
    """Expectation of the spacing penalty over timesteps and batch."""
    dx = ((x_lea_fut - x_fol_pred) * e_d).sum(dim=-1)
    return spacing_penalty(dx, delta).mean()


def loss_collision(dx_fut_longitudinal: torch.Tensor, dist: float) -> torch.Tensor:
    """Mean of exp(-dx/dist): smooth pressure toward safe spacing."""
    if dist <= 0:
        raise ValueError("dist must be positive")
    return torch.exp(-dx_fut_longitudinal / dist).mean()


def total_loss(eps: torch.Tensor, eps_hat: torch.Tensor,
               x_lea_fut_m: torch.Tensor, x_fol_pred_m: torch.Tensor,
               e_d: torch.Tensor, lambda1: float, lambda2: float,
               delta: float, dist: float) -> LossBreakdown:
    l_simple = loss_simple(eps, eps_hat)
    dx = ((x_lea_fut_m - x_fol_pred_m) * e_d).sum(dim=-1)
    l_spacing = spacing_penalty(dx, delta).mean()
    l_collision = torch.exp(-dx / dist).mean()
    l_total = l_simple + lambda1 * l_spacing + lambda2 * l_collision
    return LossBreakdown(l_simple, l_spacing, l_collision, l_total,
                         lambda1, lambda2, delta, dist)


def training_step(model: FollowGen, batch: Batch, schedule: DiffusionSchedule,
                  cfg: RunConfig, generator: torch.Generator) -> LossBreakdown:
    """One forward pass of the objective (no optimizer update)."""
    b, t_fut = batch.x_fol_fut_m.shape[0], batch.x_fol_fut_m.shape[1]
    _, scale, c = model.encode(batch)
    # the noise draw treats sigma as a conditioning statistic: without the
    # detach the encoder can minimize the noise-matching loss by collapsing
    # sigma^2 to zero, which destroys the sampling prior
    scale = NoiseScale(sigma2=scale.sigma2.detach(), mu=scale.mu.detach())
    eps = sample_scaled_noise(scale, (b, t_fut, 2), generator)
    k = torch.randint(0, schedule.K, (b,), generator=generator)
    x0 = model.to_model_space(batch.x_fol_fut_m, batch.ref_fut_m)
    x_k = forward_diffuse(x0, k, eps, schedule)
    eps_hat = model.predict_noise(x_k, k, c)
    x0_hat = reconstruct_x0(x_k, eps_hat, k, schedule)
    e_d = torch.tensor([1.0, 0.0], dtype=torch.float64)  # ego frame
    return total_loss(eps, eps_hat, batch.x_lea_fut_m,
                      model.to_meters(x0_hat, batch.ref_fut_m), e_d,
                      cfg.train.lambda1, cfg.train.lambda2,
                      cfg.train.delta, cfg.train.dist)


def _epoch_order(seed: int, epoch: int, n: int, batch_size: int) -> List[np.ndarray]:
    """Batch composition as a pure function of (seed, epoch)."""
    rng = np.random.default_rng([seed, epoch])
    order = rng.permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def train(windows: Sequence[SampleWindow], cfg: RunConfig,
          out_dir: Optional[str] = None,
          resume: bool = True) -> str:
    """Train FollowGen on normalized sample windows.

    Writes checkpoint.json (overwritten each epoch) and train_log.jsonl with
    one {epoch, step, l_simple, l_spacing, l_collision, l_total, grad_norm}
    line per optimizer step. Returns the checkpoint path.
    """
    if not windows:
        raise TrainingError("dataset is empty")
    cfg.validate()
    out_dir = out_dir or cfg.out_dir
    os.makedirs(out_dir, exist_ok=True)
    ckpt_path = os.path.join(out_dir, "checkpoint.json")
    log_path = os.path.join(out_dir, "train_log.jsonl")

    schedule = make_schedule(cfg.diffusion.kind, cfg.diffusion.k_steps,
                             cfg.diffusion.beta0, cfg.diffusion.beta_k)
    model = build_model(cfg.model, cfg.data.t_his, cfg.data.t_fut, cfg.seed)
    optimizer = torch.optim.AdamW(model.parameters(), lr=cfg.train.lr,
                                  eps=cfg.train.adam_eps,
                                  weight_decay=cfg.train.weight_decay)
    start_epoch = 0
    log_mode = "w"
    generator = torch.Generator().manual_seed(cfg.seed)
    if resume and os.path.exists(ckpt_path):
        payload = load_checkpoint(ckpt_path)
        if payload["epoch"] >= cfg.train.epochs:
            return ckpt_path
        restore_model(payload, model)
        restore_optimizer(payload, model, optimizer)
        start_epoch = payload["epoch"]
        log_mode = "a"
        # the noise generator state is folded into the torch global RNG state
        generator.set_state(torch.tensor(
            np.frombuffer(bytes.fromhex(payload["torch_rng"]), dtype=np.uint8).copy()))

    full_batch = make_batch(windows, cfg.model)
    n = len(full_batch)
    if start_epoch == 0:
        # whitening statistics for the diffused target; restored checkpoints
        # already carry them in their parameter table
        model.fit_future_stats(full_batch.x_fol_fut_m, full_batch.ref_fut_m)
    with open(log_path, log_mode, encoding="utf-8") as log:
        for epoch in range(start_epoch + 1, cfg.train.epochs + 1):
            for step, idx in enumerate(_epoch_order(cfg.seed, epoch, n,
                                                    cfg.train.batch_size)):
                sel = torch.from_numpy(idx)
                batch = Batch(*(t[sel] for t in (
                    full_batch.x_fol_his, full_batch.v_fol_his,
                    full_batch.x_lea_his, full_batch.v_lea_his,
                    full_batch.dx_his, full_batch.x_fol_fut_m,
                    full_batch.x_lea_fut_m, full_batch.ref_fut_m)))
                losses = training_step(model, batch, schedule, cfg, generator)
                if not torch.isfinite(losses.l_total):
                    raise TrainingError(
                        f"non-finite loss at epoch {epoch} step {step}")
                optimizer.zero_grad()
                losses.l_total.backward()
                grad_norm = torch.nn.utils.clip_grad_norm_(
                    model.parameters(), cfg.train.grad_clip)
                optimizer.step()
                log.write(json.dumps({
                    "epoch": epoch, "step": step,
                    "l_simple": losses.l_simple.item(),
                    "l_spacing": losses.l_spacing.item(),
                    "l_collision": losses.l_collision.item(),
                    "l_total": losses.l_total.item(),
                    "grad_norm": grad_norm.item(),
                }) + "\n")
            log.flush()
            torch.set_rng_state(generator.get_state())
            save_checkpoint(ckpt_path, model, optimizer, cfg.to_dict(),
                            schedule, epoch)
    return ckpt_path


def load_trained_model(ckpt_path: str):
    """Rebuild (model, config, schedule) from a checkpoint file."""
    from .config import RunConfig as RC, DataConfig, ModelConfig, \
        DiffusionConfig, TrainConfig, EvalConfig
    payload = load_checkpoint(ckpt_path)
    d = payload["config"]
    cfg = RC(seed=d["seed"], scenario=d["scenario"], out_dir=d["out_dir"],
             data=DataConfig(**d["data"]),
             model=ModelConfig(**{**d["model"],
                                  "unet_channels": tuple(d["model"]["unet_channels"])}),
             diffusion=DiffusionConfig(**d["diffusion"]),
             train=TrainConfig(**d["train"]),
             eval=EvalConfig(**{**d["eval"],
                                "horizons": tuple(d["eval"]["horizons"])}))
    model = build_model(cfg.model, cfg.data.t_his, cfg.data.t_fut, cfg.seed)
    restore_model(payload, model)
    schedule = make_schedule(cfg.diffusion.kind, cfg.diffusion.k_steps,
                             cfg.diffusion.beta0, cfg.diffusion.beta_k)
    return model, cfg, schedule
