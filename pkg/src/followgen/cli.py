"""Command-line entry point orchestrating the full pipeline.

Exit codes: 0 success, 2 usage error (bad flags), 3 invalid configuration,
4 missing input file, 5 runtime failure. Errors print one machine-parsable
line "error: <kind>: <detail>" on stderr.
"""

import argparse
import json
import os
import sys
from typing import List, Optional, Sequence

import numpy as np

from . import data as data_mod
from .config import (ConfigError, RunConfig, SCENARIOS, SCHEDULE_KINDS,
                     VARIANTS, default_config_path, load_config)
from .data import (IDMParams, SampleWindow, generate_idm_episodes,
                   load_episodes, normalize, save_episodes, window_samples)
from .evaluation import (ablation_run, evaluate, predict_trajectories,
                         write_reports)
from .training import load_trained_model, train

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_MISSING = 4
EXIT_RUNTIME = 5

EPILOG = """exit codes:
  0  success
  2  usage error (unknown flag or subcommand)
  3  invalid configuration
  4  missing input file
  5  runtime failure
"""


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="followgen",
        description="Car-following trajectory prediction with a scaled-noise "
                    "conditional diffusion model.",
        epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="INI config file (defaults shipped)")
        sp.add_argument("--seed", type=int, help="override config seed")
        sp.add_argument("--out-dir", help="override config output directory")
        sp.add_argument("--scenario", choices=SCENARIOS)

    sp = sub.add_parser("gen-data", help="synthesize IDM episodes to CSV")
    common(sp)

    sp = sub.add_parser("train", help="train a model, writing checkpoint and log")
    common(sp)
    sp.add_argument("--data", help="episode CSV path (else synthesize)")
    sp.add_argument("--k", type=int, help="diffusion steps K")
    sp.add_argument("--schedule", choices=SCHEDULE_KINDS)
    sp.add_argument("--variant", choices=VARIANTS)

    sp = sub.add_parser("sample", help="sample predicted trajectories")
    common(sp)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--data", help="episode CSV path (else synthesize)")
    sp.add_argument("--n-samples", type=int, default=1)
    sp.add_argument("--trace", action="store_true",
                    help="write per-step sampling traces")

    sp = sub.add_parser("eval", help="evaluate a checkpoint, emit metric reports")
    common(sp)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--data", help="episode CSV path (else synthesize)")
    sp.add_argument("--horizon", type=int, action="append",
                    choices=(3, 4, 5), help="repeatable; default 3,4,5")
    sp.add_argument("--n-samples", type=int, default=1)

    sp = sub.add_parser("ablate", help="run a (variant, K, schedule) grid")
    common(sp)
    sp.add_argument("--data", help="episode CSV path (else synthesize)")
    sp.add_argument("--variant", action="append", choices=VARIANTS)
    sp.add_argument("--k", type=int, action="append", dest="k_grid")
    sp.add_argument("--schedule", action="append", choices=SCHEDULE_KINDS,
                    dest="schedule_grid")

    sp = sub.add_parser("plot", help="render figures from logs and reports")
    common(sp)
    sp.add_argument("--ablation-csv", help="ablation.csv to plot metric-vs-K")
    sp.add_argument("--trace-file", help="trace JSONL to plot the sampling process")

    sp = sub.add_parser("validate-config",
                        help="check invariants and print the resolved config")
    common(sp)
    return p


def _load_cfg(args) -> RunConfig:
    cfg = load_config(args.config or default_config_path())
    if args.seed is not None:
        cfg.seed = args.seed
    if getattr(args, "out_dir", None):
        cfg.out_dir = args.out_dir
    if getattr(args, "scenario", None):
        cfg.scenario = args.scenario
    if getattr(args, "data", None):
        cfg.data.csv_path = args.data
    if getattr(args, "k", None) and isinstance(getattr(args, "k"), int):
        cfg.diffusion.k_steps = args.k
    if getattr(args, "schedule", None) and isinstance(args.schedule, str):
        cfg.diffusion.kind = args.schedule
    if getattr(args, "variant", None) and isinstance(args.variant, str):
        cfg.model.variant = args.variant
    cfg.validate()
    return cfg


def _idm_params(cfg: RunConfig) -> IDMParams:
    d = cfg.data
    return IDMParams(v0=d.idm_v0, s0=d.idm_s0, headway=d.idm_headway,
                     a_max=d.idm_a_max, b_comf=d.idm_b_comf,
                     delta=d.idm_delta)


def _dataset(cfg: RunConfig) -> List[SampleWindow]:
    """Windows (normalized into the ego frame) from CSV or synthesis."""
    if cfg.data.csv_path:
        episodes = load_episodes(cfg.data.csv_path, cfg.data.dt)
    else:
        episodes = generate_idm_episodes(
            cfg.data.n_episodes, cfg.data.episode_frames, cfg.data.dt,
            _idm_params(cfg), cfg.data.leader_profile, seed=cfg.seed,
            scenario_tag=cfg.scenario)
    windows = []
    for ep in episodes:
        for w in window_samples(ep, cfg.data.t_his, cfg.data.t_fut,
                                cfg.data.stride):
            windows.append(normalize(w))
    return windows


def cmd_gen_data(args) -> int:
    cfg = _load_cfg(args)
    os.makedirs(cfg.out_dir, exist_ok=True)
    episodes = generate_idm_episodes(
        cfg.data.n_episodes, cfg.data.episode_frames, cfg.data.dt,
        _idm_params(cfg), cfg.data.leader_profile, seed=cfg.seed,
        scenario_tag=cfg.scenario)
    path = os.path.join(cfg.out_dir, "episodes.csv")
    save_episodes(episodes, path)
    print(f"wrote {len(episodes)} episodes to {path}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_cfg(args)
    windows = _dataset(cfg)
    ckpt = train(windows, cfg, out_dir=cfg.out_dir)
    print(f"checkpoint: {ckpt}")
    return EXIT_OK


def cmd_sample(args) -> int:
    cfg = _load_cfg(args)
    model, mcfg, schedule = load_trained_model(args.checkpoint)
    model.eval()
    windows = _dataset(cfg)
    os.makedirs(cfg.out_dir, exist_ok=True)
    result = predict_trajectories(model, schedule, windows, cfg.seed,
                                  n_samples=args.n_samples, trace=args.trace)
    if args.trace:
        pred, steps = result
        from .plots import write_trace_jsonl
        gt = windows[0].x_fol_fut
        write_trace_jsonl(steps, os.path.join(cfg.out_dir, "trace.jsonl"),
                          gt=gt, case=0)
    else:
        pred = result
    out_path = os.path.join(cfg.out_dir, "predictions.json")
    payload = []
    for w, p in zip(windows, pred):
        world = data_mod.denormalize(p, w.frame_origin)
        payload.append({"episode_id": w.episode_id,
                        "positions": world.tolist()})
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True)
    print(f"wrote {len(payload)} predictions to {out_path}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _load_cfg(args)
    windows = _dataset(cfg)
    horizons = tuple(args.horizon) if args.horizon else cfg.eval.horizons
    reports = evaluate(args.checkpoint, windows, horizons=horizons,
                       seed=cfg.seed, n_samples=args.n_samples)
    path = write_reports(reports, cfg.out_dir)
    for r in reports:
        print(f"T={r.horizon_s}s  RMSE={r.rmse:.4f}  ADE={r.ade:.4f}  "
              f"FDE={r.fde:.4f}  MR={r.mr:.4f}")
    print(f"reports: {path}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = _load_cfg(args)
    windows = _dataset(cfg)
    split = max(1, int(0.8 * len(windows)))
    rows = ablation_run(cfg, windows[:split], windows[split:],
                        variants=args.variant or ("full",),
                        k_grid=args.k_grid or (cfg.diffusion.k_steps,),
                        schedule_grid=args.schedule_grid or (cfg.diffusion.kind,),
                        out_dir=cfg.out_dir)
    failures = [r for r in rows if r["error"]]
    print(f"{len(rows)} grid rows ({len(failures)} failed cells) "
          f"-> {os.path.join(cfg.out_dir, 'ablation.csv')}")
    return EXIT_OK


def cmd_plot(args) -> int:
    cfg = _load_cfg(args)
    os.makedirs(cfg.out_dir, exist_ok=True)
    from .plots import plot_metric_vs_k, plot_sampling_trace
    made = []
    if args.ablation_csv:
        import csv as csv_mod
        with open(args.ablation_csv, encoding="utf-8") as fh:
            rows = []
            for rec in csv_mod.DictReader(fh):
                if rec["error"]:
                    continue
                rows.append({"K": int(rec["K"]), "schedule": rec["schedule"],
                             "horizon_s": float(rec["horizon_s"]),
                             "rmse": float(rec["rmse"]), "ade": float(rec["ade"]),
                             "fde": float(rec["fde"]), "mr": float(rec["mr"]),
                             "error": None})
        made.append(plot_metric_vs_k(
            rows, os.path.join(cfg.out_dir, "metric_vs_k.png")))
    if args.trace_file:
        made.append(plot_sampling_trace(
            args.trace_file, os.path.join(cfg.out_dir, "sampling_trace.png")))
    if not made:
        print("error: usage: plot needs --ablation-csv and/or --trace-file",
              file=sys.stderr)
        return EXIT_USAGE
    for m in made:
        print(f"wrote {m}")
    return EXIT_OK


def cmd_validate_config(args) -> int:
    cfg = _load_cfg(args)
    print(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
    return EXIT_OK


_COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "sample": cmd_sample,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "plot": cmd_plot,
    "validate-config": cmd_validate_config,
}


def cli_dispatch(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: missing-file: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except Exception as exc:
        print(f"error: runtime: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main():
    sys.exit(cli_dispatch())


if __name__ == "__main__":
    main()
