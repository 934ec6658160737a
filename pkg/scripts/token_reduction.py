"""STTF re-encoded tokens per frame across scene activity levels (desk preset, 196-patch grid).

    python scripts/token_reduction.py --frames 100 --activity 0.05 0.15 0.3
"""
import argparse
import csv
import sys

from edgefuse.bench import RunConfig, run_session


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--frames", type=int, default=100)
    ap.add_argument("--activity", type=float, nargs="+", default=[0.05, 0.1, 0.15, 0.25, 0.4])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--tau", type=float, default=0.9)
    ap.add_argument("--csv", help="also write rows here")
    args = ap.parse_args(argv)

    rows = []
    for a in args.activity:
        rep = run_session(RunConfig(mode="sttf", synth="desk", frames=args.frames, activity=a, seed=args.seed,
                                    tau=args.tau, max_new_tokens=1))
        g = rep.aggregates
        rows.append({"activity": a, "mean_active_tokens": round(g["mean_active_tokens"], 3),
                     "token_reduction_pct": round(g["token_reduction_pct"], 2),
                     "mean_fused": round(g["mean_fused_count"], 3),
                     "flops_reduction_pct": round(g["flops_reduction_pct"], 2)})
        print(f"activity {a:5.2f}  tokens {g['mean_active_tokens']:7.2f}/{g['n_patches']}  "
              f"reduction {g['token_reduction_pct']:5.1f}%  fused {g['mean_fused_count']:6.2f}  "
              f"FLOPs -{g['flops_reduction_pct']:.1f}% vs dense", flush=True)
    if args.csv:
        with open(args.csv, "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)


if __name__ == "__main__":
    sys.exit(main())
