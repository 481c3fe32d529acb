import json

import numpy as np
import pytest
import torch

from followgen.checkpoint import (CheckpointError, load_checkpoint,
                                  restore_model, restore_optimizer,
                                  restore_rng, save_checkpoint)
from followgen.diffusion import make_schedule
from followgen.model import build_model, named_parameter_arrays
from tests.conftest import tiny_config


def _fixture(tmp_path, seed=0):
    cfg = tiny_config()
    model = build_model(cfg.model, cfg.data.t_his, cfg.data.t_fut, seed=seed)
    opt = torch.optim.AdamW(model.parameters(), lr=1e-3, eps=1e-2)
    # one step so the optimizer has state to serialize
    loss = sum((p ** 2).sum() for p in model.parameters() if p.requires_grad)
    loss.backward()
    opt.step()
    schedule = make_schedule("linear", cfg.diffusion.k_steps)
    path = str(tmp_path / "ckpt.json")
    save_checkpoint(path, model, opt, cfg.to_dict(), schedule, epoch=1)
    return cfg, model, opt, schedule, path


def test_round_trip_lossless(tmp_path):
    cfg, model, opt, schedule, path = _fixture(tmp_path)
    payload = load_checkpoint(path)
    assert payload["format_version"] == 1
    assert payload["epoch"] == 1
    fresh = build_model(cfg.model, cfg.data.t_his, cfg.data.t_fut, seed=99)
    restore_model(payload, fresh)
    for (na, a), (nb, b) in zip(named_parameter_arrays(model),
                                named_parameter_arrays(fresh)):
        assert na == nb
        assert np.array_equal(a, b)  # repr round trip is bit exact


def test_optimizer_state_round_trip(tmp_path):
    cfg, model, opt, schedule, path = _fixture(tmp_path)
    payload = load_checkpoint(path)
    fresh = build_model(cfg.model, cfg.data.t_his, cfg.data.t_fut, seed=99)
    restore_model(payload, fresh)
    fresh_opt = torch.optim.AdamW(fresh.parameters(), lr=1e-3, eps=1e-2)
    restore_optimizer(payload, fresh, fresh_opt)
    for p_old, p_new in zip(opt.param_groups[0]["params"],
                            fresh_opt.param_groups[0]["params"]):
        if p_old not in opt.state:
            continue
        old = opt.state[p_old]
        new = fresh_opt.state[p_new]
        assert float(old["step"]) == float(new["step"])
        assert torch.equal(old["exp_avg"], new["exp_avg"])
        assert torch.equal(old["exp_avg_sq"], new["exp_avg_sq"])


def test_rng_state_round_trip(tmp_path):
    _, _, _, _, path = _fixture(tmp_path)
    payload = load_checkpoint(path)
    restore_rng(payload)
    a = torch.randn(5)
    restore_rng(payload)
    b = torch.randn(5)
    assert torch.equal(a, b)


def test_unsupported_format_version_rejected(tmp_path):
    _, _, _, _, path = _fixture(tmp_path)
    payload = json.load(open(path))
    payload["format_version"] = 99
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(payload))
    with pytest.raises(CheckpointError):
        load_checkpoint(str(bad))


def test_missing_parameter_rejected(tmp_path):
    cfg, _, _, _, path = _fixture(tmp_path)
    payload = load_checkpoint(path)
    del payload["params"]["fut_mu"]
    fresh = build_model(cfg.model, cfg.data.t_his, cfg.data.t_fut, seed=0)
    with pytest.raises(CheckpointError):
        restore_model(payload, fresh)


def test_missing_file_raises():
    with pytest.raises(FileNotFoundError):
        load_checkpoint("/nonexistent/ckpt.json")
