"""Sensitivity of the ID+IA gain to the SIR threshold delta.

    python scripts/delta_sweep.py --deltas 6 9 12 15 --trials 100
"""

import argparse
import os

from hetdrain.config import ScenarioConfig, Strategy
from hetdrain.sim import aggregate, run_trials


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--deltas", type=float, nargs="+", default=[6.0, 9.0, 12.0, 15.0])
    ap.add_argument("--trials", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    args = ap.parse_args()

    # the baseline does not depend on delta
    base_cfg = ScenarioConfig(strategy=Strategy.FREQUENCY_REUSE, seed=args.seed)
    base = aggregate(run_trials(base_cfg, args.trials, workers=args.workers))
    print(f"frequency reuse: sue {base.avg_payoff_sue:.3f}  mue {base.avg_payoff_mue:.3f}")
    for delta in args.deltas:
        cfg = ScenarioConfig(strategy=Strategy.ID_IA, delta_db=delta, seed=args.seed)
        rep = aggregate(run_trials(cfg, args.trials, workers=args.workers))
        gain = rep.avg_payoff_sue / base.avg_payoff_sue - 1
        print(f"delta {delta:5.1f} dB: sue {rep.avg_payoff_sue:.3f} ({gain:+.1%})  "
              f"mue {rep.avg_payoff_mue:.3f}  size {rep.avg_coalition_size:.3f}")


if __name__ == "__main__":
    main()
