"""Versioned JSON checkpoints interoperable across implementations.

Layout (format_version 1):
  {
    "format_version": 1,
    "created": "<ISO timestamp>",           # metadata only
    "config": {...resolved run config...},
    "epoch": <last completed epoch, 1-based>,
    "schedule": {"kind": ..., "K": ..., "beta": [...]},
    "params": {name: {"shape": [...], "data": [row-major float64 ...]}},
    "optimizer": {name: {"step": n, "exp_avg": [...], "exp_avg_sq": [...]}},
    "torch_rng": "<hex of the torch RNG state>"
  }
Floats are serialized via repr and round-trip losslessly.
"""

import datetime
import json
import os
from typing import Optional

import numpy as np
import torch

FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(path: str, model: torch.nn.Module,
                    optimizer: Optional[torch.optim.Optimizer],
                    config: dict, schedule, epoch: int):
    params = {}
    for name, p in model.named_parameters():
        arr = p.detach().numpy()
        params[name] = {"shape": list(arr.shape),
                        "data": arr.reshape(-1).tolist()}
    opt_state = {}
    if optimizer is not None:
        names = [name for name, _ in model.named_parameters()]
        for name, p in zip(names, optimizer.param_groups[0]["params"]):
            st = optimizer.state.get(p)
            if st:
                opt_state[name] = {
                    "step": int(st["step"]),
                    "exp_avg": st["exp_avg"].numpy().reshape(-1).tolist(),
                    "exp_avg_sq": st["exp_avg_sq"].numpy().reshape(-1).tolist(),
                }
    payload = {
        "format_version": FORMAT_VERSION,
        "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "config": config,
        "epoch": epoch,
        "schedule": {"kind": schedule.kind, "K": schedule.K,
                     "beta": schedule.beta.tolist()},
        "params": params,
        "optimizer": opt_state,
        "torch_rng": torch.get_rng_state().numpy().tobytes().hex(),
    }
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True)
    os.replace(tmp, path)


def load_checkpoint(path: str) -> dict:
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint format {payload.get('format_version')!r}")
    return payload


def restore_model(payload: dict, model: torch.nn.Module):
    params = payload["params"]
    with torch.no_grad():
        for name, p in model.named_parameters():
            if name not in params:
                raise CheckpointError(f"checkpoint missing parameter {name}")
            entry = params[name]
            arr = np.asarray(entry["data"], dtype=np.float64).reshape(entry["shape"])
            p.copy_(torch.from_numpy(arr))


def restore_optimizer(payload: dict, model: torch.nn.Module,
                      optimizer: torch.optim.Optimizer):
    opt_state = payload.get("optimizer", {})
    names = [name for name, _ in model.named_parameters()]
    for name, p in zip(names, optimizer.param_groups[0]["params"]):
        if name not in opt_state:
            continue
        entry = opt_state[name]
        optimizer.state[p] = {
            "step": torch.tensor(float(entry["step"]), dtype=torch.float64),
            "exp_avg": torch.tensor(entry["exp_avg"], dtype=torch.float64).view_as(p),
            "exp_avg_sq": torch.tensor(entry["exp_avg_sq"], dtype=torch.float64).view_as(p),
        }


def restore_rng(payload: dict):
    state = np.frombuffer(bytes.fromhex(payload["torch_rng"]), dtype=np.uint8)
    torch.set_rng_state(torch.from_numpy(state.copy()))
