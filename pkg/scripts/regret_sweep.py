"""Measured regret against the optimized bound over a grid of horizons.

For each stock model and stream, runs the SSA at the optimal learning rate
for T in the grid, averages over seeds, and fits R_T / T = c / sqrt(T).
Writes ``regret_sweep.csv`` to the output directory.

    python scripts/regret_sweep.py --out results --seeds 5
"""

import argparse
from pathlib import Path

import numpy as np

from rumodp.environments import EnvironmentConfig, generate
from rumodp.gev import table1_specs
from rumodp.io import write_csv
from rumodp.learners import ssa_trajectory
from rumodp.regret import hannan_fit, regret_bound, regret_curve

STREAMS = ("adversarial_alternating", "iid_uniform", "iid_gaussian_clipped", "best_arm_shift")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("results"))
    ap.add_argument("--n", type=int, default=10)
    ap.add_argument("--horizons", type=int, nargs="+", default=[100, 1_000, 10_000, 100_000])
    ap.add_argument("--seeds", type=int, default=5)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    rows = []
    for name, spec in table1_specs(args.n).items():
        for kind in STREAMS:
            seeds = [0] if kind == "adversarial_alternating" else range(args.seeds)
            means = []
            for T in args.horizons:
                rep = regret_bound(spec, T, 1.0)
                regrets = []
                for seed in seeds:
                    U = generate(EnvironmentConfig(kind, spec.n, T, 1.0, seed=seed))
                    regrets.append(regret_curve(ssa_trajectory(spec, rep.eta, U), U)[-1])
                means.append(float(np.mean(regrets)))
                rows.append([name, kind, T, rep.eta, float(np.max(regrets)), means[-1], rep.bound])
            fit = hannan_fit(args.horizons, means)
            print(f"{name:6s} {kind:24s} c={fit.c:8.4f} R2={fit.r2:.4f} slope={fit.loglog_slope:+.3f}")
    write_csv(args.out / "regret_sweep.csv", ["model", "stream", "T", "eta", "max_regret", "mean_regret", "bound"], rows)


if __name__ == "__main__":
    main()
