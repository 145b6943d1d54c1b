"""Rate study: RMSE of the local Hurst estimators against n, with log-log slopes.

    python scripts/rate_study.py --out results/rate --reps 200
"""

from __future__ import annotations

import argparse
import logging

from mbmhurst.harness import ExperimentConfig, run_rate_study

SCENARIOS = [
    dict(scenario="constant_h", hurst=0.3),
    dict(scenario="constant_h", hurst=0.7),
    dict(scenario="smooth_h", hurst=0.5, amplitude=0.2),
]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results/rate")
    ap.add_argument("--reps", type=int, default=200)
    ap.add_argument("--n", type=int, nargs="+", default=[2 ** k for k in range(10, 15)])
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO)
    for i, kw in enumerate(SCENARIOS):
        tag = f"{kw['scenario']}_{kw['hurst']:g}"
        cfg = ExperimentConfig(n_list=tuple(args.n), replications=args.reps, seed=args.seed + i,
                               output_dir=f"{args.out}/{tag}", threads=args.threads, **kw)
        table = run_rate_study(cfg)
        print(f"# {tag}")
        print(table.summary_csv(), end="")


if __name__ == "__main__":
    main()
