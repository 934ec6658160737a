"""edgefuse command line: synth, run, verify, train.

Exit codes: 0 success, 1 verification failure, 2 configuration error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from .bench import RunConfig, run_session, write_report
from .config import ConfigError, from_kv, read_kv
from .core.checkpoint import CheckpointError, read_checkpoint, write_checkpoint
from .events import PRESETS, StreamFormatError, SynthConfigError, SynthSceneConfig, save_stream, synth_stream
from .train import TrainConfig, evaluate, make_task, train

OUT_ENV = "EDGEFUSE_OUT"
EXIT_OK, EXIT_VERIFY, EXIT_CONFIG = 0, 1, 2


def default_out() -> str:
    return os.environ.get(OUT_ENV, "runs")


def _merge(cls, args, keys):
    """Config file values first, explicit flags override."""
    values = read_kv(args.config) if getattr(args, "config", None) else {}
    for k in keys:
        v = getattr(args, k, None)
        if v is not None:
            values[k] = ",".join(str(x) for x in v) if isinstance(v, (list, tuple)) else str(v)
    return from_kv(cls, values)


def cmd_synth(args) -> int:
    base = PRESETS[args.preset]
    over = {k: getattr(args, k) for k in ("frames", "speed", "seed", "object") if getattr(args, k) is not None}
    if args.activity is not None:
        over["activity_fraction"] = args.activity
    if args.size is not None:
        over["height"] = over["width"] = args.size
    if args.patch_size is not None:
        over["patch_size"] = args.patch_size
    cfg = SynthSceneConfig(**{**asdict(base), **over})
    res = synth_stream(cfg)
    out = Path(args.out or default_out())
    out.mkdir(parents=True, exist_ok=True)
    stem = args.name
    save_stream(out / f"{stem}.evs", res.stream())
    np.save(out / f"{stem}_rgb.npy", np.stack(res.rgb))
    sidecar = {
        "config": asdict(cfg),
        "object_param": res.object_param,
        "n_patches": cfg.n_patches,
        "active_patches": [[int(i) for i in t] for t in res.truth],
        "active_counts": [len(t) for t in res.truth],
        "mean_active": res.mean_active,
        "n_events": int(len(res.events)),
    }
    (out / f"{stem}_truth.json").write_text(json.dumps(sidecar, sort_keys=True) + "\n")
    print(f"wrote {out / (stem + '.evs')}: {len(res.events)} events, {cfg.frames} frames, "
          f"mean active {res.mean_active:.2f}/{cfg.n_patches}")
    return EXIT_OK


RUN_KEYS = [f.name for f in fields(RunConfig)]


def cmd_run(args) -> int:
    cfg = _merge(RunConfig, args, RUN_KEYS)
    report = run_session(cfg)
    out = cfg.out_dir or default_out()
    jp, cp = write_report(report, out, args.name)
    agg = report.aggregates
    print(f"{cfg.mode}: {agg['frames']} frames, mean active tokens {agg['mean_active_tokens']:.2f}/"
          f"{agg['n_patches']} ({agg['token_reduction_pct']:.1f}% reduction), FLOPs "
          f"{agg['flops_reduction_pct']:.1f}% below {agg['baseline']}")
    # wall clock is machine dependent, so it goes to the terminal only
    print(f"informational: {report.frames_per_second:.1f} frames/s")
    print(f"report: {jp} {cp}")
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import CHECKS, run_checks

    if args.checkpoint:
        try:
            tensors = read_checkpoint(args.checkpoint)
        except CheckpointError as exc:
            print(f"FAIL  checkpoint {args.checkpoint}: {exc}")
            return EXIT_VERIFY
        print(f"PASS  checkpoint {args.checkpoint}: {len(tensors)} tensors")
    names = args.only or list(CHECKS)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise ConfigError(f"unknown checks: {', '.join(unknown)}")
    results = run_checks(names)
    for r in results:
        print(r.line())
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"{len(failed)} check(s) failed: {', '.join(failed)}")
        return EXIT_VERIFY
    print(f"all {len(results)} checks passed")
    return EXIT_OK


TRAIN_KEYS = [f.name for f in fields(TrainConfig)]


def cmd_train(args) -> int:
    cfg = _merge(TrainConfig, args, TRAIN_KEYS)
    out = Path(args.out or default_out())
    out.mkdir(parents=True, exist_ok=True)
    task = make_task(cfg.task_config)
    with open(out / f"{args.name}_metrics.jsonl", "w") as log:
        model, hist = train(cfg, log, task=task)
    write_checkpoint(out / f"{args.name}.tgvm", model.state_dict())
    if len(task.val_y):
        val = evaluate(model, task, cfg)
        print(f"val: task loss {val.task_loss:.4f}, accuracy {val.accuracy:.3f}, "
              f"tokens {val.token_l0_relaxed:.2f}")
    if hist:
        print(f"train: loss {hist[0].task_loss:.4f} -> {hist[-1].task_loss:.4f} over {len(hist)} steps")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="edgefuse", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic EVS1 stream, rgb frames and truth sidecar")
    s.add_argument("--preset", choices=sorted(PRESETS), default="desk")
    s.add_argument("--frames", type=int)
    s.add_argument("--activity", type=float)
    s.add_argument("--speed", type=float)
    s.add_argument("--object", choices=["square", "dot", "flicker"])
    s.add_argument("--size", type=int)
    s.add_argument("--patch-size", dest="patch_size", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./runs)")
    s.add_argument("--name", default="stream")
    s.set_defaults(fn=cmd_synth)

    r = sub.add_parser("run", help="stream frames through an engine and write JSON + CSV reports")
    r.add_argument("--config", help="key = value file; flags override it")
    r.add_argument("--mode", choices=["sttf", "anc", "dense-baseline"])
    r.add_argument("--stream")
    r.add_argument("--rgb")
    r.add_argument("--synth", choices=sorted(PRESETS))
    r.add_argument("--frames", type=int)
    r.add_argument("--activity", type=float)
    r.add_argument("--speed", type=float)
    r.add_argument("--object", choices=["square", "dot", "flicker"])
    r.add_argument("--frame-us", dest="frame_us", type=int)
    r.add_argument("--checkpoint")
    r.add_argument("--seed", type=int)
    r.add_argument("--patch-size", dest="patch_size", type=int)
    r.add_argument("--tau", type=float)
    r.add_argument("--fusion-policy", dest="fusion_policy", action="store_const", const=True)
    r.add_argument("--budget", type=float)
    r.add_argument("--branches", help="name:width:depth:heads,...")
    r.add_argument("--prompt", type=int, nargs="+")
    r.add_argument("--max-new-tokens", dest="max_new_tokens", type=int)
    r.add_argument("--out", dest="out_dir", help=f"output directory (default ${OUT_ENV} or ./runs)")
    r.add_argument("--name", default="report")
    r.set_defaults(fn=cmd_run)

    v = sub.add_parser("verify", help="run the oracle suite")
    v.add_argument("--checkpoint", help="also check that this checkpoint file decodes")
    v.add_argument("--only", nargs="+", help="subset of checks")
    v.set_defaults(fn=cmd_verify)

    t = sub.add_parser("train", help="toy training run; writes metrics JSONL and a checkpoint")
    t.add_argument("--config", help="key = value file; flags override it")
    t.add_argument("--task", choices=["motion", "echo"])
    t.add_argument("--steps", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--batch", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--lambda1", type=float)
    t.add_argument("--lambda2", type=float)
    t.add_argument("--budget", type=float)
    t.add_argument("--out")
    t.add_argument("--name", default="train")
    t.set_defaults(fn=cmd_train)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, SynthConfigError, StreamFormatError, CheckpointError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
