"""Benchmark sessions: stream frames through an engine and build the per-frame report."""
from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .anc import AncConfig, AncModel, BranchSpec, anc_step, medium_only_step
from .config import ConfigError
from .core.checkpoint import read_checkpoint
from .core.flops import FlopsLedger
from .events import PRESETS, SynthSceneConfig, frames_from_stream, load_stream, synth_stream
from .sttf import FusionConfig, SttfConfig, SttfModel, dense_step, sttf_step

REPORT_VERSION = 1
MODES = ("sttf", "anc", "dense-baseline")


def parse_branches(text: str) -> tuple[BranchSpec, ...]:
    """``name:width:depth:heads`` entries separated by commas."""
    specs = []
    for item in text.split(","):
        parts = item.strip().split(":")
        if len(parts) != 4:
            raise ConfigError(f"branch spec {item!r} is not name:width:depth:heads")
        try:
            specs.append(BranchSpec(parts[0], int(parts[1]), int(parts[2]), int(parts[3])))
        except ValueError as exc:
            raise ConfigError(f"branch spec {item!r}: {exc}") from None
    return tuple(specs)


def format_branches(specs) -> str:
    return ",".join(f"{s.name}:{s.width}:{s.depth}:{s.heads}" for s in specs)


@dataclass(frozen=True)
class RunConfig:
    mode: str = "sttf"
    stream: str | None = None  # EVS1 file; mutually exclusive with synth
    rgb: str | None = None  # .npy of F x 3 x H x W frames for a stream file
    synth: str | None = None  # preset name: desk, dvs128, tiny
    frames: int | None = None
    activity: float | None = None
    speed: float | None = None
    object: str | None = None
    frame_us: int = 10_000
    checkpoint: str | None = None
    seed: int = 0
    patch_size: int = 16
    tau: float = 0.9
    fusion_policy: bool = False
    budget: float = 1.0
    branches: str = "tiny:12:1:2,small:32:2:4,medium:80:3:4"
    prompt: tuple[int, ...] = (1,)
    max_new_tokens: int = 4
    out_dir: str | None = None

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {', '.join(MODES)}, got {self.mode!r}")
        if (self.stream is None) == (self.synth is None):
            raise ConfigError("give exactly one stream source: a stream file or a synth preset")
        if self.synth is not None and self.synth not in PRESETS:
            raise ConfigError(f"unknown synth preset {self.synth!r}; choose from {', '.join(PRESETS)}")
        if self.stream is None and self.rgb is not None:
            raise ConfigError("rgb frames only apply to a stream file")
        if not 0.0 <= self.budget <= 1.0:
            raise ConfigError(f"budget {self.budget} outside [0, 1]")
        if self.patch_size <= 0 or self.frame_us <= 0 or self.max_new_tokens < 0:
            raise ConfigError("patch_size and frame_us must be positive, max_new_tokens non-negative")
        if self.mode == "anc":
            parse_branches(self.branches)
        if self.mode != "sttf" and self.fusion_policy:
            raise ConfigError("fusion_policy only applies to mode sttf")

    def public(self) -> dict:
        """Config fields recorded in the report (output location excluded, so reports compare byte-for-byte)."""
        out = asdict(self)
        out.pop("out_dir")
        out["prompt"] = list(self.prompt)
        return out


@dataclass
class Source:
    height: int
    width: int
    frames: list  # EventFrame
    rgb: list[np.ndarray]


def load_source(cfg: RunConfig) -> Source:
    if cfg.synth is not None:
        base = PRESETS[cfg.synth]
        over = {k: v for k, v in (("frames", cfg.frames), ("activity_fraction", cfg.activity),
                                  ("speed", cfg.speed), ("object", cfg.object)) if v is not None}
        scfg = SynthSceneConfig(**{**asdict(base), **over, "seed": cfg.seed, "patch_size": cfg.patch_size,
                                   "frame_us": cfg.frame_us})
        res = synth_stream(scfg)
        return Source(scfg.height, scfg.width, res.frames, res.rgb)
    stream = load_stream(cfg.stream)
    frames = frames_from_stream(stream.events, stream.height, stream.width, cfg.frame_us, cfg.frames)
    if cfg.rgb is not None:
        rgb = np.load(cfg.rgb)
        if rgb.ndim != 4 or rgb.shape[1:] != (3, stream.height, stream.width) or len(rgb) < len(frames):
            raise ConfigError(f"rgb array {rgb.shape} does not cover {len(frames)} frames of "
                              f"3x{stream.height}x{stream.width}")
        rgb = [np.asarray(f, dtype=np.float32) for f in rgb[:len(frames)]]
    else:
        rgb = [np.zeros((3, stream.height, stream.width), dtype=np.float32) for _ in frames]
    return Source(stream.height, stream.width, frames, rgb)


def build_models(cfg: RunConfig, src: Source):
    if src.height % cfg.patch_size or src.width % cfg.patch_size:
        raise ConfigError(f"{src.height}x{src.width} frames do not tile into {cfg.patch_size}px patches")
    if cfg.mode == "anc":
        model = AncModel(AncConfig(height=src.height, width=src.width, patch_size=cfg.patch_size,
                                   branches=parse_branches(cfg.branches), seed=cfg.seed))
    else:
        model = SttfModel(SttfConfig(height=src.height, width=src.width, patch_size=cfg.patch_size, seed=cfg.seed))
    if cfg.checkpoint is not None:
        try:
            model.load_state_dict(read_checkpoint(cfg.checkpoint))
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"checkpoint {cfg.checkpoint} does not fit the {cfg.mode} model: {exc}") from exc
    return model


@dataclass
class BenchReport:
    config: dict
    records: list[dict]
    aggregates: dict = field(default_factory=dict)
    wall_seconds: float = 0.0  # informational only, never written to the JSON report

    def to_json(self) -> str:
        doc = {"report_version": REPORT_VERSION, "config": self.config, "frames": self.records,
               "aggregates": self.aggregates}
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"

    def csv_rows(self) -> list[dict]:
        return [flatten_record(r) for r in self.records]

    def to_csv(self) -> str:
        rows = self.csv_rows()
        cols = sorted({k for r in rows for k in r}, key=_column_order)
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({c: r.get(c, "") for c in cols})
        return buf.getvalue()

    @property
    def frames_per_second(self) -> float:
        return len(self.records) / self.wall_seconds if self.wall_seconds > 0 else float("nan")


_LEAD = ("frame", "active_tokens", "fused_count", "flops_total", "baseline_flops", "F", "w.0", "w.1", "w.2",
         "y_hat")


def _column_order(c: str):
    return (_LEAD.index(c), c) if c in _LEAD else (len(_LEAD), c)


def flatten_record(r: dict) -> dict:
    out = {}
    for k, v in r.items():
        if isinstance(v, dict):
            for kk, vv in v.items():
                out[f"{k}.{kk}"] = vv
        elif isinstance(v, list) and k in ("w", "p"):
            for i, vv in enumerate(v):
                out[f"{k}.{i}"] = vv
        elif isinstance(v, list):
            out[k] = " ".join(str(x) for x in v)
        else:
            out[k] = v
    return out


def aggregate(records: list[dict], n_patches: int, baseline: str) -> dict:
    """Summary numbers, recomputable from the per-frame records alone."""
    n = len(records)
    mean_active = sum(r["active_tokens"] for r in records) / n
    total = sum(r["flops_total"] for r in records)
    base = sum(r["baseline_flops"] for r in records)
    out = {
        "frames": n,
        "n_patches": n_patches,
        "mean_active_tokens": mean_active,
        "token_reduction_pct": 100.0 * (1.0 - mean_active / n_patches),
        "mean_fused_count": sum(r["fused_count"] for r in records) / n,
        "flops_total": total,
        "baseline": baseline,
        "baseline_flops_total": base,
        "flops_reduction_pct": 100.0 * (1.0 - total / base),
    }
    stages: dict[str, int] = {}
    for r in records:
        for k, v in r["flops"].items():
            stages[k] = stages.get(k, 0) + v
    out["flops_by_stage"] = dict(sorted(stages.items()))
    if records and "F" in records[0]:
        counts = [0, 0, 0]
        for r in records:
            for i in r["active"]:
                counts[i] += 1
        out["branch_executions"] = counts
    return out


def run_session(cfg: RunConfig) -> BenchReport:
    cfg.validate()
    src = load_source(cfg)
    model = build_models(cfg, src)
    records = []
    t0 = time.perf_counter()
    if cfg.mode == "anc":
        for i, (x, e) in enumerate(zip(src.rgb, src.frames)):
            y_hat, F, m = anc_step(x, e, cfg.prompt, model, cfg.budget, max_new_tokens=cfg.max_new_tokens)
            _, F_base, _ = medium_only_step(x, e, cfg.prompt, model, cfg.budget, max_new_tokens=cfg.max_new_tokens)
            n = model.cfg.n_patches
            records.append({
                "frame": i, "active_tokens": n, "fused_count": 0, "flops": m.cost, "flops_total": F,
                "baseline_flops": F_base, "F": F, "w": [float(v) for v in m.w], "p": [float(v) for v in m.p],
                "active": m.active, "level": m.level, "active_channels": m.active_channels, "y_hat": y_hat,
            })
        baseline = "medium-only"
    else:
        fusion = FusionConfig(tau=cfg.tau, use_policy=cfg.fusion_policy, budget=cfg.budget)
        state = None
        for i, (x, e) in enumerate(zip(src.rgb, src.frames)):
            y_dense, dm = dense_step(x, cfg.prompt, model, i, max_new_tokens=cfg.max_new_tokens)
            if cfg.mode == "dense-baseline":
                y_hat, m = y_dense, dm
            else:
                y_hat, state, m = sttf_step(x, e, cfg.prompt, state, model, fusion,
                                            max_new_tokens=cfg.max_new_tokens)
            records.append({
                "frame": i, "active_tokens": m.active_tokens, "fused_count": m.fused_count, "flops": m.flops,
                "flops_total": m.total_flops, "baseline_flops": dm.total_flops, "mask_active": m.mask_active,
                "y_hat": y_hat,
            })
        baseline = "dense"
    wall = time.perf_counter() - t0
    n_patches = (src.height // cfg.patch_size) * (src.width // cfg.patch_size)
    return BenchReport(cfg.public(), records, aggregate(records, n_patches, baseline), wall)


def write_report(report: BenchReport, out_dir: str | Path, stem: str = "report") -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jp, cp = out / f"{stem}.json", out / f"{stem}.csv"
    jp.write_text(report.to_json())
    cp.write_text(report.to_csv())
    return jp, cp


def ledger_total(records: list[dict]) -> FlopsLedger:
    led = FlopsLedger()
    for r in records:
        led.merge(FlopsLedger(dict(r["flops"])))
    return led
