"""Compare the closed-form tau^2, the long-run variance of the linearised summand, and
the Monte-Carlo variance of sqrt(n) (H_hat(1) - H(1)) on exact fBm.

    python scripts/tau2_check.py --reps 500 --n 8192
"""

from __future__ import annotations

import argparse
import math

import numpy as np

from mbmhurst.estimators import EstimatorParams, increments, integrated_hurst
from mbmhurst.fracmath import tau_squared, tau_squared_lrv
from mbmhurst.localpoly import Kernel
from mbmhurst.simulate import FbmConfig, simulate_fbm


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--hurst", type=float, nargs="+", default=[0.3, 0.5, 0.7])
    ap.add_argument("--n", type=int, default=8192)
    ap.add_argument("--reps", type=int, default=500)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()
    params = EstimatorParams(kernel=Kernel("epanechnikov", "left"))
    print("hurst,tau2_printed,tau2_lrv,mc_var,mc_se")
    for H in args.hurst:
        z = []
        for r in range(args.reps):
            cur = integrated_hurst(increments(simulate_fbm(FbmConfig(H=H, n=args.n, seed=args.seed + r))), params)
            z.append(math.sqrt(args.n) * (cur.values[-1] - H * (args.n - cur.start + 1) / args.n))
        z = np.asarray(z)
        var = np.var(z, ddof=1)
        se = math.sqrt(np.var((z - z.mean()) ** 2, ddof=1) / z.size)
        print(f"{H:g},{tau_squared(H):.5f},{tau_squared_lrv(H):.5f},{var:.5f},{se:.5f}", flush=True)


if __name__ == "__main__":
    main()
