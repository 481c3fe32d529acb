"""FollowGen: scaled-noise conditional diffusion for car-following prediction."""

from .config import RunConfig, load_config
from .data import (Episode, IDMParams, SampleWindow, generate_idm_episodes,
                   load_episodes, normalize, denormalize, window_samples)
from .diffusion import (DiffusionSchedule, forward_diffuse, make_schedule,
                        reverse_step, sample_trajectory)
from .history import (HistoryEncoder, NoiseScale, compute_noise_scale,
                      fft_embed, location_attention, sample_scaled_noise)
from .model import FollowGen, build_model
from .evaluation import MetricsReport, compute_metrics, evaluate

__all__ = [
    "RunConfig", "load_config",
    "Episode", "IDMParams", "SampleWindow", "generate_idm_episodes",
    "load_episodes", "normalize", "denormalize", "window_samples",
    "DiffusionSchedule", "forward_diffuse", "make_schedule", "reverse_step",
    "sample_trajectory",
    "HistoryEncoder", "NoiseScale", "compute_noise_scale", "fft_embed",
    "location_attention", "sample_scaled_noise",
    "FollowGen", "build_model",
    "MetricsReport", "compute_metrics", "evaluate",
]

__version__ = "0.1.0"
