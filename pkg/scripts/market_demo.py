"""Cost-function market makers built from GEV surplus functions.

Runs a seeded random trade stream against the LMSR (MNL) and a nested
market maker, audits each cost function, and writes the trajectories.

    python scripts/market_demo.py --trades 200 --b 1.0
"""

import argparse
from pathlib import Path

import numpy as np

from rumodp.gev import GevSpec, social_surplus
from rumodp.io import write_csv
from rumodp.market import run_market, validity_audit


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trades", type=int, default=200)
    ap.add_argument("--b", type=float, default=1.0)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path, default=Path("results"))
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    makers = {"lmsr": GevSpec.mnl(4), "nested": GevSpec.nl([[0, 1], [2, 3]], [0.4, 0.8])}
    trades = np.random.default_rng(args.seed).normal(0, 0.3, (args.trades, 4))
    for name, spec in makers.items():
        traj = run_market(spec, args.b, trades)
        audit = validity_audit(spec, args.b, seed=args.seed)
        gap = traj.charges.sum() - (social_surplus(spec, traj.q[-1], args.b) - social_surplus(spec, traj.q[0], args.b))
        n = spec.n
        header = ["t", *(f"q_{i + 1}" for i in range(n)), *(f"p_{i + 1}" for i in range(n)), "charge"]
        write_csv(args.out / f"market_{name}.csv", header, ([int(r[0]), *r[1:]] for r in traj.table()))
        print(
            f"{name:7s} final prices {np.round(traj.prices[-1], 4)}  revenue {traj.charges.sum():.4f}  "
            f"path gap {gap:.1e}  audit {'ok' if audit.ok else audit.failures}"
        )


if __name__ == "__main__":
    main()
