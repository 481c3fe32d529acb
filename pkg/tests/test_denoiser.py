import math

import numpy as np
import pytest
import torch

from followgen.denoiser import (NumericInputError, UNet1d, _norm_groups,
                                sinusoidal_embedding)
from tests.conftest import tiny_config


def test_sinusoidal_embedding_values():
    width = 8
    k = torch.tensor([0, 5])
    emb = sinusoidal_embedding(k, width).numpy()
    assert emb.shape == (2, width)
    # step 0: all sines zero, all cosines one
    assert np.allclose(emb[0, :4], 0.0)
    assert np.allclose(emb[0, 4:], 1.0)
    freqs = np.exp(-math.log(10000.0) * np.arange(4) / 3)
    assert np.allclose(emb[1, :4], np.sin(5 * freqs), atol=1e-12)
    assert np.allclose(emb[1, 4:], np.cos(5 * freqs), atol=1e-12)


def test_sinusoidal_embedding_odd_width_padded():
    emb = sinusoidal_embedding(torch.tensor([3]), 7)
    assert emb.shape == (1, 7)
    assert float(emb[0, -1]) == 0.0


def test_norm_groups_divisibility():
    assert _norm_groups(8) == 8
    assert _norm_groups(16) == 8
    assert _norm_groups(12) == 4
    assert _norm_groups(6) == 2
    assert _norm_groups(5) == 1


@pytest.mark.parametrize("t", [3, 8, 16, 50])
def test_unet_preserves_length(t):
    cfg = tiny_config().model
    net = UNet1d(cfg).double()
    x = torch.randn(2, t, 2, dtype=torch.float64)
    k = torch.tensor([1, 4])
    c = torch.randn(2, cfg.embed_width, dtype=torch.float64)
    with torch.no_grad():
        out = net(x, k, c)
    assert out.shape == (2, t, 2)


def test_unet_default_channel_stack():
    """Default-width network (channels 8..128) runs on a 50-step future."""
    from followgen.config import ModelConfig
    cfg = ModelConfig()
    net = UNet1d(cfg).double()
    x = torch.randn(1, 50, 2, dtype=torch.float64)
    with torch.no_grad():
        out = net(x, torch.tensor([100]),
                  torch.randn(1, cfg.embed_width, dtype=torch.float64))
    assert out.shape == (1, 50, 2)


def test_unet_output_depends_on_condition_and_step():
    cfg = tiny_config().model
    net = UNet1d(cfg).double()
    x = torch.randn(1, 10, 2, dtype=torch.float64)
    c = torch.randn(1, cfg.embed_width, dtype=torch.float64)
    with torch.no_grad():
        base = net(x, torch.tensor([2]), c)
        other_c = net(x, torch.tensor([2]), c + 1.0)
        other_k = net(x, torch.tensor([7]), c)
    assert not torch.allclose(base, other_c)
    assert not torch.allclose(base, other_k)


def test_unet_rejects_nonfinite_input():
    cfg = tiny_config().model
    net = UNet1d(cfg).double()
    x = torch.full((1, 10, 2), float("inf"), dtype=torch.float64)
    c = torch.zeros(1, cfg.embed_width, dtype=torch.float64)
    with pytest.raises(NumericInputError):
        net(x, torch.tensor([0]), c)
