"""How much MUEs gain from releasing streams when they carry two streams each.

    python scripts/mue_release.py --trials 100
"""

import argparse
import os

import numpy as np

from hetdrain.config import ScenarioConfig, Strategy
from hetdrain.sim import run_trials


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--d-mue", type=int, default=2)
    ap.add_argument("--trials", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    args = ap.parse_args()

    out = {}
    for s in (Strategy.FREQUENCY_REUSE, Strategy.ID_IA):
        cfg = ScenarioConfig(d_mue=args.d_mue, strategy=s, seed=args.seed)
        out[s] = run_trials(cfg, args.trials, workers=args.workers)
    base = np.array([r.row()["mean_mue_rate"] for r in out[Strategy.FREQUENCY_REUSE]])
    coop = np.array([r.row()["mean_mue_rate"] for r in out[Strategy.ID_IA]])
    released = np.array([r.released for r in out[Strategy.ID_IA]])
    print(f"mean MUE rate {coop.mean():.3f} vs {base.mean():.3f} "
          f"({coop.mean() / base.mean() - 1:+.1%})")
    print(f"trials with a release: {np.mean(released > 0):.0%}, "
          f"streams released per trial: {released.mean():.2f}")


if __name__ == "__main__":
    main()
