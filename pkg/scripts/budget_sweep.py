"""Open gate channels and output drift as the budget signal b is lowered.

All three branches run (weights forced near uniform) so every gate is counted.
Drift is the relative L2 distance of the fused features from the b=1 output.
"""
import argparse
import sys

import numpy as np

from edgefuse.anc import SMALL, AncModel, branch_forward, fixed_route
from edgefuse.core import tensor as T
from edgefuse.core.rng import Rng


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--inputs", type=int, default=20)
    ap.add_argument("--budgets", type=float, nargs="+", default=[0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    model = AncModel(SMALL)
    rng = Rng(args.seed)
    route = fixed_route([0.34, 0.33, 0.33])
    opened = np.zeros(len(args.budgets))
    drift = np.zeros(len(args.budgets))
    total = 0
    with T.no_grad():
        for _ in range(args.inputs):
            x = rng.uniform((3, 64, 64)).astype(np.float32)
            e = (rng.uniform((2, 64, 64)) * 3).astype(np.float32)
            inputs = model.branch_inputs(x, e)
            ref = branch_forward(inputs, route, model, 1.0).z.data
            for k, b in enumerate(args.budgets):
                out = branch_forward(inputs, route, model, b)
                gates = [a.data for gs in out.gates.values() for a in gs]
                opened[k] += sum((a > 0.5).sum() for a in gates)
                total = sum(a.size for a in gates)
                drift[k] += np.linalg.norm(out.z.data - ref) / np.linalg.norm(ref)
    for b, o, d in zip(args.budgets, opened / args.inputs, drift / args.inputs):
        print(f"b={b:4.2f}  open channels {o:6.1f}/{total}  drift {d:.4f}")


if __name__ == "__main__":
    sys.exit(main())
