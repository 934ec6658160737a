"""ANC cost F relative to the always-Medium baseline.

Two sweeps: patch activity of the synthetic desk stream (activity 0 is a
stream with no events), and uniform event density as a fraction of the
estimator's full scale (kappa events per pixel and polarity). The estimator
keys on density, so only the second sweep reaches the Small and Medium levels.
"""
import argparse
import csv
import sys
from dataclasses import replace

import numpy as np

from edgefuse.anc import LEVELS, AncConfig, AncModel, anc_step, branch_flops, medium_only_step
from edgefuse.events import PRESETS, synth_stream


def measure(model, pairs, budget):
    F = F_med = 0
    levels = np.zeros(3, int)
    for x, e in pairs:
        _, f, m = anc_step(x, e, [1], model, budget, max_new_tokens=1)
        _, fm, _ = medium_only_step(x, e, [1], model, budget, max_new_tokens=1)
        F += f
        F_med += fm
        levels[m.level] += 1
    return F / F_med, levels


def line(label, frac, levels):
    return (f"{label}  F/F_medium {frac:.4f}  ({100 * (frac - 1):+.1f}%)  levels "
            + " ".join(f"{n}={c}" for n, c in zip(LEVELS, levels)))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--frames", type=int, default=20)
    ap.add_argument("--activity", type=float, nargs="+", default=[0.0, 0.05, 0.15, 0.3])
    ap.add_argument("--density", type=float, nargs="+", default=[0.0, 0.2, 0.4, 0.6, 0.8, 1.0])
    ap.add_argument("--budget", type=float, default=1.0)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--csv")
    args = ap.parse_args(argv)

    cfg = AncConfig(seed=args.seed)
    model = AncModel(cfg)
    bf = [branch_flops(s, cfg) for s in cfg.branches]
    print("branch FLOPs per frame: " + ", ".join(f"{s.name} {f:,}" for s, f in zip(cfg.branches, bf))
          + f"  (1 : {bf[1] / bf[0]:.2f} : {bf[2] / bf[0]:.2f})")
    rows = []
    for a in args.activity:
        res = synth_stream(replace(PRESETS["desk"], frames=args.frames, activity_fraction=a, seed=args.seed))
        frac, levels = measure(model, zip(res.rgb, res.frames), args.budget)
        rows.append({"sweep": "activity", "value": a, "F_over_medium": round(frac, 4),
                     **{f"frames_{n}": int(c) for n, c in zip(LEVELS, levels)}})
        print(line(f"activity {a:4.2f}", frac, levels), flush=True)
    rgb = np.zeros((3, cfg.height, cfg.width), np.float32)
    for d in args.density:
        e = np.full((2, cfg.height, cfg.width), d * cfg.kappa, np.float32)
        frac, levels = measure(model, [(rgb, e)], args.budget)
        rows.append({"sweep": "density", "value": d, "F_over_medium": round(frac, 4),
                     **{f"frames_{n}": int(c) for n, c in zip(LEVELS, levels)}})
        print(line(f"density  {d:4.2f}", frac, levels), flush=True)
    if args.csv:
        with open(args.csv, "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)


if __name__ == "__main__":
    sys.exit(main())
