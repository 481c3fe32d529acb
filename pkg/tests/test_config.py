import os

import pytest

from followgen.config import (ConfigError, RunConfig, default_config_path,
                              load_config)


def test_defaults_validate():
    cfg = RunConfig()
    cfg.validate()
    assert cfg.diffusion.k_steps == 200
    assert cfg.train.lr == 1e-3
    assert cfg.train.adam_eps == 1e-2
    assert cfg.train.batch_size == 64
    assert cfg.train.epochs == 20
    assert cfg.train.lambda1 == 1e-3 and cfg.train.lambda2 == 1e-3
    assert cfg.train.delta == 2.0 and cfg.train.dist == 2.0


def test_shipped_default_ini_loads():
    cfg = load_config(default_config_path())
    assert cfg.model.unet_channels == (8, 16, 32, 64, 128)
    assert cfg.eval.horizons == (3, 4, 5)


def test_ini_overrides(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text("[run]\nseed = 7\n[diffusion]\nkind = sigmoid\n"
                    "k_steps = 50\n[model]\nlearnable_w0 = true\n")
    cfg = load_config(str(path))
    assert cfg.seed == 7
    assert cfg.diffusion.kind == "sigmoid"
    assert cfg.diffusion.k_steps == 50
    assert cfg.model.learnable_w0 is True


def test_env_seed_override(tmp_path, monkeypatch):
    path = tmp_path / "run.ini"
    path.write_text("[run]\nseed = 7\n")
    monkeypatch.setenv("FOLLOWGEN_SEED", "99")
    assert load_config(str(path)).seed == 99


def test_unknown_section_and_key(tmp_path):
    bad_section = tmp_path / "a.ini"
    bad_section.write_text("[nope]\nx = 1\n")
    with pytest.raises(ConfigError):
        load_config(str(bad_section))
    bad_key = tmp_path / "b.ini"
    bad_key.write_text("[train]\nlearning_rate = 0.1\n")
    with pytest.raises(ConfigError):
        load_config(str(bad_key))


def test_missing_file_raises():
    with pytest.raises(FileNotFoundError):
        load_config("/nonexistent/run.ini")


@pytest.mark.parametrize("mutate", [
    lambda c: setattr(c.data, "dt", 0.0),
    lambda c: setattr(c.data, "leader_profile", "warp"),
    lambda c: setattr(c.model, "variant", "bogus"),
    lambda c: setattr(c.model, "history_out_width", 3),
    lambda c: setattr(c.model, "n_heads", 7),
    lambda c: setattr(c.diffusion, "kind", "cosine"),
    lambda c: setattr(c.diffusion, "beta0", 0.5),
    lambda c: setattr(c.eval, "horizons", (3, 4, 99)),
    lambda c: setattr(c, "scenario", "XX"),
])
def test_validation_rejects_bad_values(mutate):
    cfg = RunConfig()
    mutate(cfg)
    with pytest.raises(ConfigError):
        cfg.validate()


def test_horizon_must_fit_future_window():
    cfg = RunConfig()
    cfg.data.t_fut = 20  # 5 s horizon needs 50 frames at dt=0.1
    with pytest.raises(ConfigError):
        cfg.validate()
