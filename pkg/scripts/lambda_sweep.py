"""Token-sparsity weight sweep on the motion-direction toy task.

Trains one model per (lambda1, seed) and reports validation accuracy and the
relaxed active-token count per frame.
"""
import argparse
import sys

import numpy as np

from edgefuse.train import TrainConfig, evaluate, make_task, train


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--lambda1", type=float, nargs="+", default=[0.0, 0.01, 0.03, 0.1, 0.3])
    ap.add_argument("--lambda2", type=float, default=0.01)
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--steps", type=int, default=200)
    args = ap.parse_args(argv)

    print(f"{'lambda1':>8} {'tokens':>8} {'acc':>6} {'val loss':>9} {'gates':>7}")
    for lam in args.lambda1:
        stats = []
        for seed in range(args.seeds):
            cfg = TrainConfig(steps=args.steps, seed=seed, lambda1=lam, lambda2=args.lambda2)
            task = make_task(cfg.task_config)
            model, _ = train(cfg, task=task)
            r = evaluate(model, task, cfg)
            stats.append((r.token_l0_relaxed, r.accuracy, r.task_loss, r.gate_l0_relaxed))
        tok, acc, loss, gates = np.mean(stats, axis=0)
        print(f"{lam:8.3f} {tok:8.3f} {acc:6.3f} {loss:9.4f} {gates:7.2f}", flush=True)


if __name__ == "__main__":
    sys.exit(main())
