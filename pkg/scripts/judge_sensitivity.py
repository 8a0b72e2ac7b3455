"""Re-audit protocol runs with one judge biased toward the warm-start arm.

Compares the warm-minus-cold quality gap seen by the biased judge alone with
the gap seen by the full judge ensemble.
"""
import argparse
import copy

import numpy as np

from coordpolicy.config import load_config
from coordpolicy.experiments import reaudit, run_protocol, warm_start_comparison


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--bias", type=float, default=0.05, help="score shift the biased judge gives warm runs")
    ap.add_argument("--judges", type=int, default=3)
    ap.add_argument("--config")
    args = ap.parse_args()

    config = load_config(args.config)
    config.experiment.arms = ("main", "warm_start")
    biased = copy.deepcopy(config)
    biased.env.judges[config.experiment.live_judge].arm_bias = {"warm_start": args.bias}
    judge_ids = list(config.reward.judges[: args.judges])

    excess = []
    print(f"{'seed':>4} {'single':>8} {'ensemble':>9} {'excess':>8}")
    for seed in args.seeds:
        proto = run_protocol(config, seed)
        reaudit(proto, biased, judge_ids)
        s = warm_start_comparison(proto.results["main"], proto.results["warm_start"])["plateau"]
        excess.append(s["delta_single"] - s["delta_audited"])
        print(f"{seed:>4} {s['delta_single']:>+8.4f} {s['delta_audited']:>+9.4f} {excess[-1]:>+8.4f}")
    print(f"mean excess {np.mean(excess):+.4f} over {len(excess)} seeds")


if __name__ == "__main__":
    main()
