"""Run the four-arm protocol over several seeds and print the headline numbers.

    python3 scripts/run_protocol.py --seeds 0 1 2 3 4 --out runs/
"""
import argparse
import time
from pathlib import Path

import numpy as np

from coordpolicy.config import load_config
from coordpolicy.experiments import per_class_report, run_protocol, warm_start_comparison
from coordpolicy.sim import COORDINATION_HEAVY, PROCEDURAL, SimEnv


def summarize(proto, env):
    res = proto.results
    main, base = res["main"], res["baseline"]
    neutral = [r for tag in PROCEDURAL
               for r in main.skip_rates([tag], env.planted_optimum(tag).skip_neutral).values()]
    critical = [r for tag in COORDINATION_HEAVY
                for r in main.skip_rates([tag], env.planted_optimum(tag).critical).values()]
    deltas = {r["class"]: r["delta"] for r in per_class_report(base, main)}
    ws = warm_start_comparison(main, res["warm_start"])
    e2 = ws["epochs"][min(1, len(ws["epochs"]) - 1)]
    return {
        "skip_neutral": float(np.mean(neutral)),
        "skip_critical": float(np.mean(critical)),
        "reward_gain": main.plateau("mean_audited_reward") - base.plateau("mean_audited_reward"),
        "heavy_deltas": [deltas[t] for t in COORDINATION_HEAVY],
        "no_skip_token_ratio": res["no_skip"].plateau("mean_tokens") / main.plateau("mean_tokens"),
        "warm_token_ratio": e2["cum_warm_tokens"] / e2["cum_cold_tokens"],
        "warm_quality_gap": ws["plateau"]["delta_audited"],
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--config")
    ap.add_argument("--out", help="write full outputs per seed under this directory")
    args = ap.parse_args()

    config = load_config(args.config)
    env = SimEnv(config.env)
    for seed in args.seeds:
        t0 = time.perf_counter()
        out = Path(args.out) / f"seed{seed}" if args.out else None
        s = summarize(run_protocol(config, seed, out_dir=out), env)
        heavy = " ".join(f"{d:+.3f}" if d is not None else "n/a" for d in s["heavy_deltas"])
        print(f"seed {seed} ({time.perf_counter() - t0:.1f} s)")
        print(f"  skip rate neutral {s['skip_neutral']:.3f}  critical {s['skip_critical']:.3f}")
        print(f"  reward gain over baseline {s['reward_gain']:+.3f}  coordination-heavy deltas {heavy}")
        print(f"  no_skip / main tokens {s['no_skip_token_ratio']:.3f}")
        print(f"  warm / cold tokens (epochs 1-2) {s['warm_token_ratio']:.3f}  "
              f"plateau quality gap {s['warm_quality_gap']:+.3f}")


if __name__ == "__main__":
    main()
