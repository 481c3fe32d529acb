import numpy as np
import pytest
import torch

from followgen.data import generate_idm_episodes, normalize, window_samples
from followgen.history import HistoryEncoder, LinearHistoryEncoder
from followgen.interaction import InteractionEncoder, LinearInteractionEncoder
from followgen.model import (FollowGen, build_model, kinematic_reference,
                             make_batch, named_parameter_arrays)


def test_batch_shapes_and_scaling(cfg_tiny, tiny_windows):
    batch = make_batch(tiny_windows, cfg_tiny.model)
    n, t_his, t_fut = len(tiny_windows), cfg_tiny.data.t_his, cfg_tiny.data.t_fut
    assert batch.x_fol_his.shape == (n, t_his, 2)
    assert batch.v_fol_his.shape == (n, t_his, 1)
    assert batch.x_fol_fut_m.shape == (n, t_fut, 2)
    assert batch.ref_fut_m.shape == (n, t_fut, 2)
    # histories are feature-scaled, futures kept in meters
    w = tiny_windows[0]
    assert np.allclose(batch.x_fol_his[0].numpy(),
                       w.x_fol_his / cfg_tiny.model.pos_scale)
    assert np.allclose(batch.v_fol_his[0].numpy(),
                       w.v_fol_his / cfg_tiny.model.speed_scale)
    assert np.allclose(batch.x_fol_fut_m[0].numpy(), w.x_fol_fut)


def test_kinematic_reference_exact_on_constant_velocity(tiny_windows):
    w = tiny_windows[0]
    # overwrite with uniform straight-line motion at 4 m/s along +x
    t_his, t_fut = w.x_fol_his.shape[0], w.x_fol_fut.shape[0]
    xs = (np.arange(t_his + t_fut) - (t_his - 1)) * 4.0 * w.dt
    w.x_fol_his = np.stack([xs[:t_his], np.zeros(t_his)], axis=1)
    w.x_fol_fut = np.stack([xs[t_his:], np.zeros(t_fut)], axis=1)
    ref = kinematic_reference(w, t_fut)
    assert np.allclose(ref, w.x_fol_fut, atol=1e-9)


def test_kinematic_reference_clamps_speed_at_zero(tiny_windows):
    w = tiny_windows[0]
    t_his, t_fut = w.x_fol_his.shape[0], 50
    # strong constant deceleration: speed hits zero inside the horizon
    v = np.maximum(3.0 - 2.0 * np.arange(t_his) * w.dt, 0.1)
    xs = np.concatenate([[0.0], np.cumsum(v[1:] * w.dt)])
    w.x_fol_his = np.stack([xs, np.zeros(t_his)], axis=1)
    ref = kinematic_reference(w, t_fut)
    # positions monotone non-decreasing and eventually flat (stopped)
    dx = np.diff(ref[:, 0])
    assert np.all(dx >= -1e-12)
    assert dx[-1] == pytest.approx(0.0, abs=1e-9)


def test_whitening_round_trip(cfg_tiny, tiny_windows):
    model = build_model(cfg_tiny.model, cfg_tiny.data.t_his,
                        cfg_tiny.data.t_fut, seed=0)
    batch = make_batch(tiny_windows, cfg_tiny.model)
    model.fit_future_stats(batch.x_fol_fut_m, batch.ref_fut_m)
    assert (model.fut_sd >= 0.1 - 1e-12).all()
    z = model.to_model_space(batch.x_fol_fut_m, batch.ref_fut_m)
    back = model.to_meters(z, batch.ref_fut_m)
    assert torch.allclose(back, batch.x_fol_fut_m, atol=1e-9)
    # whitened residuals are centered with unit-or-floored spread
    assert float(z.mean().abs()) < 1e-9


def test_future_stats_ride_in_named_parameters(cfg_tiny):
    model = build_model(cfg_tiny.model, cfg_tiny.data.t_his,
                        cfg_tiny.data.t_fut, seed=0)
    names = dict(model.named_parameters())
    assert "fut_mu" in names and "fut_sd" in names
    assert not names["fut_mu"].requires_grad


def test_variant_wiring(cfg_tiny):
    t_his, t_fut = cfg_tiny.data.t_his, cfg_tiny.data.t_fut
    cfg = cfg_tiny.model
    cfg.variant = "full"
    m = FollowGen(cfg, t_his, t_fut)
    assert isinstance(m.history, HistoryEncoder)
    assert isinstance(m.interaction, InteractionEncoder)
    cfg.variant = "no_locattn_fft"
    m = FollowGen(cfg, t_his, t_fut)
    assert isinstance(m.history, LinearHistoryEncoder)
    cfg.variant = "no_cross_attention"
    m = FollowGen(cfg, t_his, t_fut)
    assert isinstance(m.interaction, LinearInteractionEncoder)


def test_no_noise_scaling_forces_unit_variance(cfg_tiny, tiny_windows):
    cfg = cfg_tiny.model
    cfg.variant = "no_noise_scaling"
    model = build_model(cfg, cfg_tiny.data.t_his, cfg_tiny.data.t_fut, seed=0)
    batch = make_batch(tiny_windows[:4], cfg)
    with torch.no_grad():
        _, scale, _ = model.encode(batch)
    assert torch.equal(scale.sigma2, torch.ones_like(scale.sigma2))


def test_build_model_deterministic(cfg_tiny):
    a = build_model(cfg_tiny.model, cfg_tiny.data.t_his,
                    cfg_tiny.data.t_fut, seed=123)
    b = build_model(cfg_tiny.model, cfg_tiny.data.t_his,
                    cfg_tiny.data.t_fut, seed=123)
    c = build_model(cfg_tiny.model, cfg_tiny.data.t_his,
                    cfg_tiny.data.t_fut, seed=124)
    pa, pb, pc = (named_parameter_arrays(m) for m in (a, b, c))
    assert all(np.array_equal(x[1], y[1]) for x, y in zip(pa, pb))
    assert any(not np.array_equal(x[1], y[1]) for x, y in zip(pa, pc))


def test_encode_and_predict_shapes(cfg_tiny, tiny_windows):
    model = build_model(cfg_tiny.model, cfg_tiny.data.t_his,
                        cfg_tiny.data.t_fut, seed=0)
    batch = make_batch(tiny_windows[:5], cfg_tiny.model)
    with torch.no_grad():
        z_his, scale, c = model.encode(batch)
        eps_hat = model.predict_noise(
            torch.randn(5, cfg_tiny.data.t_fut, 2, dtype=torch.float64),
            torch.full((5,), 3), c)
    assert z_his.shape == (5, cfg_tiny.data.t_his, 2)
    assert scale.sigma2.shape == (5, 2)
    assert (scale.sigma2 > 0).all()
    assert c.shape == (5, cfg_tiny.model.embed_width)
    assert eps_hat.shape == (5, cfg_tiny.data.t_fut, 2)
