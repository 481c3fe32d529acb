import numpy as np
import pytest
import torch

from followgen.config import RunConfig
from followgen.data import generate_idm_episodes, normalize, window_samples


def tiny_config() -> RunConfig:
    """Small configuration used across tests where runtime matters more than
    fidelity to the default hyperparameters."""
    cfg = RunConfig()
    cfg.seed = 0
    cfg.out_dir = "runs/test"
    cfg.data.t_his = 8
    cfg.data.t_fut = 10
    cfg.data.stride = 20
    cfg.data.n_episodes = 3
    cfg.data.episode_frames = 120
    cfg.model.gru_hidden = 8
    cfg.model.attn_proj_width = 8
    cfg.model.embed_width = 10
    cfg.model.n_heads = 2
    cfg.model.ffn_width = 12
    cfg.model.unet_channels = (4, 8)
    cfg.model.time_embed_width = 8
    cfg.model.cond_channels = 4
    cfg.diffusion.k_steps = 10
    cfg.train.batch_size = 8
    cfg.train.epochs = 2
    cfg.eval.horizons = (1,)
    cfg.validate()
    return cfg


@pytest.fixture
def cfg_tiny():
    return tiny_config()


@pytest.fixture
def tiny_windows(cfg_tiny):
    episodes = generate_idm_episodes(
        cfg_tiny.data.n_episodes, cfg_tiny.data.episode_frames,
        cfg_tiny.data.dt, leader_profile="stop-and-go", seed=11)
    return [normalize(w) for ep in episodes
            for w in window_samples(ep, cfg_tiny.data.t_his,
                                    cfg_tiny.data.t_fut, cfg_tiny.data.stride)]


@pytest.fixture(autouse=True)
def _fixed_torch_seed():
    torch.manual_seed(0)
    np.random.seed(0)
