import numpy as np
import pytest
import torch
import torch.nn as nn

from followgen.config import ModelConfig
from followgen.history import (HistoryEncoder, LinearHistoryEncoder,
                               NumericInputError, compute_noise_scale,
                               fft_embed, location_attention,
                               sample_scaled_noise)
from tests.conftest import tiny_config


def _dft_reference(z):
    """Direct O(N^2) DFT along the time axis, (T, C) complex output."""
    t = z.shape[0]
    n = np.arange(t)
    w = np.exp(-2j * np.pi * np.outer(n, n) / t)
    return w @ z


def test_fft_embed_matches_direct_dft():
    rng = np.random.default_rng(0)
    for trial in range(20):
        t = int(rng.integers(2, 65))
        c = int(rng.integers(1, 6))
        z = rng.standard_normal((t, c))
        spec = _dft_reference(z)
        out = fft_embed(torch.from_numpy(z)).numpy()
        assert out.shape == (t, 2 * c)
        assert np.allclose(out[:, :c], spec.real, atol=1e-9)
        assert np.allclose(out[:, c:], spec.imag, atol=1e-9)


def test_location_attention_weights_sum_to_one():
    rng = np.random.default_rng(1)
    proj = nn.Linear(6, 1).double()
    for trial in range(1000):
        b, t = int(rng.integers(1, 4)), int(rng.integers(2, 9))
        z = torch.from_numpy(rng.standard_normal((b, t, 6)))
        w0 = torch.ones(t, 1, dtype=torch.float64)
        with torch.no_grad():
            z_loc, w1 = location_attention(z, w0, proj)
        assert z_loc.shape == z.shape
        assert np.allclose(w1.sum(dim=-2).numpy(), 1.0, atol=1e-6)
        assert (w1 >= 0).all()


def test_location_attention_reweights_elementwise():
    proj = nn.Linear(3, 1).double()
    z = torch.randn(2, 4, 3, dtype=torch.float64)
    w0 = torch.ones(4, 1, dtype=torch.float64)
    z_loc, w1 = location_attention(z, w0, proj)
    assert torch.allclose(z_loc, w1 * z)


def test_noise_scale_softplus():
    z = torch.tensor([[[1.0, -2.0], [3.0, 0.0]]], dtype=torch.float64)
    scale = compute_noise_scale(z)
    mu = np.array([2.0, -1.0])
    assert np.allclose(scale.mu.numpy(), mu)
    assert np.allclose(scale.sigma2.numpy(), np.log1p(np.exp(mu)), atol=1e-12)
    assert (scale.sigma2 > 0).all()


def test_scaled_noise_statistics():
    mu = torch.tensor([[0.5, -0.5]], dtype=torch.float64)
    scale = compute_noise_scale(mu.unsqueeze(1))
    g = torch.Generator().manual_seed(0)
    eps = sample_scaled_noise(scale, (1, 200000, 2), g)
    var = eps.var(dim=1).numpy()[0]
    assert np.allclose(var, scale.sigma2.numpy()[0], rtol=0.02)


def test_encoder_shapes_and_nonfinite_guard():
    cfg = tiny_config().model
    enc = HistoryEncoder(cfg, t_his=8).double()
    x = torch.randn(3, 8, 2, dtype=torch.float64)
    v = torch.rand(3, 8, 1, dtype=torch.float64)
    z = enc(x, v)
    assert z.shape == (3, 8, cfg.history_out_width)
    with pytest.raises(NumericInputError):
        enc(x * float("nan"), v)


def test_linear_encoder_shape():
    cfg = tiny_config().model
    enc = LinearHistoryEncoder(cfg, t_his=8).double()
    z = enc(torch.randn(2, 8, 2, dtype=torch.float64),
            torch.rand(2, 8, 1, dtype=torch.float64))
    assert z.shape == (2, 8, cfg.history_out_width)


def test_w0_fixed_by_default_learnable_by_flag():
    cfg = tiny_config().model
    enc = HistoryEncoder(cfg, t_his=8)
    assert "w0" not in dict(enc.named_parameters())
    cfg.learnable_w0 = True
    enc = HistoryEncoder(cfg, t_his=8)
    assert "w0" in dict(enc.named_parameters())
