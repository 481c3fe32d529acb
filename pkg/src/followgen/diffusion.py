"""Beta schedules, scaled-noise forward process, condition-guided reverse sampler."""

import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import torch

from .history import NoiseScale


class ScheduleError(ValueError):
    pass


class SamplingDivergenceError(RuntimeError):
    pass


@dataclass
class DiffusionSchedule:
    kind: str
    K: int
    beta: torch.Tensor       # (K,)
    alpha: torch.Tensor      # (K,) = 1 - beta
    alpha_bar: torch.Tensor  # (K,) cumulative product of alpha

    def posterior_beta(self, k: int) -> float:
        """beta~_k = beta_k * (1 - alpha_bar_{k-1}) / (1 - alpha_bar_k)."""
        ab_prev = self.alpha_bar[k - 1] if k > 0 else torch.tensor(1.0, dtype=torch.float64)
        return float(self.beta[k] * (1.0 - ab_prev) / (1.0 - self.alpha_bar[k]))


def make_schedule(kind: str, K: int, beta0: float = 1e-4,
                  beta_k: float = 0.02) -> DiffusionSchedule:
    """Build a noise schedule of the given kind with exact endpoints.

    linear: evenly spaced; quadratic: evenly spaced in sqrt(beta) then squared;
    sigmoid: logistic curve over [-6, 6] rescaled to [beta0, beta_k].
    """
    if K < 1:
        raise ScheduleError("K must be >= 1")
    if not (0.0 < beta0 <= beta_k < 1.0):
        raise ScheduleError("need 0 < beta0 <= beta_k < 1")
    if kind == "linear":
        beta = torch.linspace(beta0, beta_k, K, dtype=torch.float64)
    elif kind == "quadratic":
        beta = torch.linspace(math.sqrt(beta0), math.sqrt(beta_k), K,
                              dtype=torch.float64) ** 2
    elif kind == "sigmoid":
        s = torch.sigmoid(torch.linspace(-6.0, 6.0, K, dtype=torch.float64))
        if K == 1:
            beta = torch.tensor([beta0], dtype=torch.float64)
        else:
            s = (s - s[0]) / (s[-1] - s[0])
            beta = beta0 + (beta_k - beta0) * s
    else:
        raise ScheduleError(f"unknown schedule kind {kind!r}")
    alpha = 1.0 - beta
    return DiffusionSchedule(kind=kind, K=K, beta=beta, alpha=alpha,
                             alpha_bar=torch.cumprod(alpha, dim=0))


def _gather(values: torch.Tensor, k) -> torch.Tensor:
    """Index schedule coefficients by scalar or per-batch-element step."""
    if isinstance(k, int):
        if not 0 <= k < len(values):
            raise IndexError(f"diffusion step {k} out of range [0, {len(values)})")
        return values[k]
    if ((k < 0) | (k >= len(values))).any():
        raise IndexError("diffusion step out of range")
    return values[k].view(-1, *([1] * 1), 1)  # (B, 1, 1) against (B, T, D)


def forward_diffuse(x0: torch.Tensor, k, eps: torch.Tensor,
                    schedule: DiffusionSchedule) -> torch.Tensor:
    """Closed-form noising: x_k = sqrt(abar_k) x0 + sqrt(1 - abar_k) eps.

    k may be an int or a (B,) tensor of per-element steps for batched x0.
    """
    ab = _gather(schedule.alpha_bar.to(x0.dtype), k)
    return torch.sqrt(ab) * x0 + torch.sqrt(1.0 - ab) * eps


def reconstruct_x0(x_k: torch.Tensor, eps: torch.Tensor, k,
                   schedule: DiffusionSchedule) -> torch.Tensor:
    """Invert the closed form: x0_hat = (x_k - sqrt(1 - abar_k) eps) / sqrt(abar_k)."""
    ab = _gather(schedule.alpha_bar.to(x_k.dtype), k)
    return (x_k - torch.sqrt(1.0 - ab) * eps) / torch.sqrt(ab)


def reverse_step(x_k: torch.Tensor, eps_hat: torch.Tensor, k: int,
                 schedule: DiffusionSchedule, scale: NoiseScale,
                 generator: Optional[torch.Generator] = None,
                 noise: Optional[torch.Tensor] = None) -> torch.Tensor:
    """One ancestral denoising step from x_k to x_{k-1}.

    The posterior variance is beta~_k scaled per dimension by sigma^2; the
    final step (k=0) returns the predicted mean with no noise. A pre-drawn
    standard-normal `noise` can be supplied instead of a generator.
    """
    beta = float(schedule.beta[k])
    alpha = float(schedule.alpha[k])
    ab = float(schedule.alpha_bar[k])
    mean = (x_k - beta / math.sqrt(1.0 - ab) * eps_hat) / math.sqrt(alpha)
    if k == 0:
        return mean
    if noise is None:
        noise = torch.randn(x_k.shape, generator=generator, dtype=x_k.dtype)
    sigma = torch.sqrt(scale.sigma2).unsqueeze(-2)
    return mean + math.sqrt(schedule.posterior_beta(k)) * sigma * noise


def sample_trajectory(c: torch.Tensor, scale: NoiseScale,
                      schedule: DiffusionSchedule,
                      denoiser: Callable[[torch.Tensor, torch.Tensor, torch.Tensor], torch.Tensor],
                      shape: Tuple[int, ...],
                      generator: Optional[torch.Generator] = None,
                      noise_stack: Optional[torch.Tensor] = None,
                      trace: bool = False):
    """Ancestral sampling: x_K ~ N(0, diag(sigma^2)) refined over K reverse steps.

    shape is (..., T_fut, D) including any batch dimension of c/scale.
    noise_stack, if given, supplies the K+1 standard-normal draws (init plus
    one per step) with shape (K+1, *shape); this makes batched sampling
    reproducible per instance regardless of batch composition.

    Returns the final trajectory, or (trajectory, steps) when trace=True where
    steps is a list of (k, x_k) snapshots after each reverse step.
    """
    sigma = torch.sqrt(scale.sigma2).unsqueeze(-2)
    if noise_stack is None:
        base = torch.randn((schedule.K + 1, *shape), generator=generator,
                           dtype=sigma.dtype)
    else:
        base = noise_stack
    x = sigma * base[0]
    steps: List[Tuple[int, torch.Tensor]] = []
    k_dtype = torch.long
    for k in range(schedule.K - 1, -1, -1):
        k_batch = torch.full(shape[:-2] or (1,), k, dtype=k_dtype)
        eps_hat = denoiser(x, k_batch, c)
        x = reverse_step(x, eps_hat, k, schedule, scale, noise=base[schedule.K - k])
        if not torch.isfinite(x).all():
            raise SamplingDivergenceError(f"non-finite trajectory at step k={k}")
        if trace:
            steps.append((k, x.detach().clone()))
    if trace:
        return x, steps
    return x
