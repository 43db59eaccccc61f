"""Print the optimized regret-bound table for the stock models.

    python scripts/table1.py --n 10 --T 10000 --u-max 1
"""

import argparse

from rumodp.gev import table1_specs
from rumodp.regret import bounds_table, format_table


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=10)
    ap.add_argument("--T", type=int, default=10_000)
    ap.add_argument("--u-max", type=float, default=1.0)
    args = ap.parse_args()
    rows = bounds_table(table1_specs(args.n), args.T, args.u_max)
    cols = ["model", "min_lambda", "L", "log_n", "log_g1", "eta_table", "bound_table", "eta_exact", "bound_exact"]
    print(format_table(rows, cols))


if __name__ == "__main__":
    main()
