import json

import numpy as np
import pytest

from followgen.plots import (plot_metric_vs_k, plot_sampling_trace,
                             write_trace_jsonl)


def _fake_steps(n_steps=5, t_fut=6):
    rng = np.random.default_rng(0)
    return [(k, rng.standard_normal((2, t_fut, 2)))
            for k in range(n_steps - 1, -1, -1)]


def test_write_trace_jsonl_content(tmp_path):
    steps = _fake_steps()
    gt = np.zeros((6, 2))
    path = write_trace_jsonl(steps, str(tmp_path / "trace.jsonl"), gt=gt,
                             case=1)
    lines = [json.loads(l) for l in open(path).read().splitlines()]
    assert [l["k"] for l in lines] == [4, 3, 2, 1, 0]
    for (k, x), rec in zip(steps, lines):
        assert np.allclose(rec["positions"], x[1])
        expect = np.linalg.norm(x[1] - gt, axis=-1)
        assert np.allclose(rec["abs_error_if_gt_known"], expect)


def test_write_trace_jsonl_without_gt(tmp_path):
    path = write_trace_jsonl(_fake_steps(), str(tmp_path / "t.jsonl"))
    rec = json.loads(open(path).read().splitlines()[0])
    assert rec["abs_error_if_gt_known"] is None


def test_plot_sampling_trace_renders_png(tmp_path):
    trace = write_trace_jsonl(_fake_steps(), str(tmp_path / "t.jsonl"),
                              gt=np.zeros((6, 2)))
    out = plot_sampling_trace(trace, str(tmp_path / "trace.png"))
    assert (tmp_path / "trace.png").stat().st_size > 0
    assert out == str(tmp_path / "trace.png")


def test_plot_sampling_trace_rejects_empty_file(tmp_path):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    with pytest.raises(ValueError):
        plot_sampling_trace(str(empty), str(tmp_path / "out.png"))


def test_plot_metric_vs_k_renders_png(tmp_path):
    rows = []
    for kind in ("linear", "sigmoid"):
        for K in (50, 100, 200):
            rows.append({"K": K, "schedule": kind, "horizon_s": 5.0,
                         "rmse": 1.0 / K, "ade": 2.0 / K, "fde": 3.0 / K,
                         "mr": 0.5, "error": None})
    rows.append({"K": 10, "schedule": "linear", "horizon_s": 5.0,
                 "rmse": 9.9, "ade": 9.9, "fde": 9.9, "mr": 1.0,
                 "error": "failed cell"})  # must be skipped
    out = plot_metric_vs_k(rows, str(tmp_path / "mk.png"))
    assert (tmp_path / "mk.png").stat().st_size > 0
    assert out == str(tmp_path / "mk.png")
