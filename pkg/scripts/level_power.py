"""Level and power table for the CUSUM and goodness-of-fit tests.

    python scripts/level_power.py --out results/tests --reps 500
"""

from __future__ import annotations

import argparse
import logging

from mbmhurst.harness import ExperimentConfig, run_test_study

ROWS = [
    ("cusum level, H=0.3", dict(scenario="constant_h", hurst=0.3, n_list=(4096,))),
    ("cusum level, H=0.7", dict(scenario="constant_h", hurst=0.7, n_list=(4096,))),
    ("cusum level, sinusoidal sigma", dict(scenario="constant_h", hurst=0.5, sigma="sinusoidal", n_list=(4096,))),
    ("cusum power, jump 0.3->0.7", dict(scenario="jump_h", n_list=(8192,))),
    ("cusum power, smooth H", dict(scenario="smooth_h", n_list=(8192,))),
    ("gof level, singleton truth", dict(scenario="constant_h", hurst=0.5, test="gof", gof_class="singleton",
                                        n_list=(4096,))),
    ("gof level, linear truth vs linear family", dict(scenario="linear_h", test="gof", gof_class="linear",
                                                      n_list=(8192,))),
    ("gof power, linear truth vs constants", dict(scenario="linear_h", test="gof", gof_class="constant",
                                                  n_list=(8192,))),
]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results/tests")
    ap.add_argument("--reps", type=int, default=500)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO)
    print("case,n,rejection_rate,se")
    for i, (label, kw) in enumerate(ROWS):
        cfg = ExperimentConfig(replications=args.reps, seed=args.seed + i, threads=args.threads,
                               output_dir=f"{args.out}/{i:02d}", **kw)
        for s in run_test_study(cfg).summary:
            print(f"{label},{s['n']},{s['rejection_rate']:.4f},{s['se']:.4f}", flush=True)


if __name__ == "__main__":
    main()
