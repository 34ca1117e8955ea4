"""Coalition size, SUE rate and desired-subspace interference against the number of SBSs.

    python scripts/k_sweep.py --trials 100 --out results/k_sweep.csv
"""

import argparse
import os

from hetdrain.config import ScenarioConfig, Strategy
from hetdrain.sim import aggregate, rows_to_csv, run_trials


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--ks", type=int, nargs="+", default=[10, 20, 30, 40, 50])
    ap.add_argument("--n-mue", type=int, default=32)
    ap.add_argument("--trials", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    ap.add_argument("--out")
    args = ap.parse_args()

    rows = []
    for k in args.ks:
        for s in (Strategy.FREQUENCY_REUSE, Strategy.IA_ONLY, Strategy.ID_IA):
            cfg = ScenarioConfig(n_sbs=k, n_mue=args.n_mue, strategy=s, seed=args.seed)
            rep = aggregate(run_trials(cfg, args.trials, workers=args.workers))
            rows.append({"n_sbs": k, "strategy": s.value, **rep.summary()})
            print(f"K={k:3d} {s.value:16s} sue {rep.avg_payoff_sue:7.3f}  "
                  f"size {rep.avg_coalition_size:5.3f}  "
                  f"desired-subspace {rep.interference_in_desired_subspace:5.1f}%")
    if args.out:
        os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
        with open(args.out, "w") as f:
            f.write(rows_to_csv(rows))


if __name__ == "__main__":
    main()
