"""No-regret dynamics on random games: CCE gap and per-player regret.

    python scripts/games_cce.py --games 20 --strategies 5 --T 10000
"""

import argparse
from pathlib import Path

from rumodp.games import NormalFormGame, SmoothnessParams, cce_check, routing_game, run_dynamics, welfare_bound_check
from rumodp.gev import GevSpec
from rumodp.io import write_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--games", type=int, default=20)
    ap.add_argument("--strategies", type=int, default=5)
    ap.add_argument("--T", type=int, default=10_000)
    ap.add_argument("--out", type=Path, default=Path("results"))
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    spec = GevSpec.mnl(args.strategies)
    rows = []
    for seed in range(args.games):
        game = NormalFormGame.random(2, args.strategies, seed)
        res = run_dynamics(game, spec, args.T)
        r = res.regrets()
        rep = cce_check(game, res.distribution, max(r) / args.T)
        rows.append([seed, r[0], r[1], rep.delta, rep.worst_margin, int(rep.ok)])
        print(f"game {seed:2d}: regrets {r[0]:8.3f} {r[1]:8.3f}  delta {rep.delta:.2e}  margin {rep.worst_margin:+.2e}")
    write_csv(args.out / "games_cce.csv", ["seed", "regret_1", "regret_2", "delta", "worst_margin", "ok"], rows)

    game = routing_game()
    smooth = SmoothnessParams.best_lambda(game, 0.5, (0, 1))
    w = welfare_bound_check(game, smooth, run_dynamics(game, GevSpec.mnl(2), args.T))
    print(
        f"routing game: lambda={smooth.lam:.3f} mu={smooth.mu} PoA<={w.price_of_anarchy:.3f}; "
        f"average welfare {w.average_welfare:.4f} >= {w.lower_bound:.4f}"
    )


if __name__ == "__main__":
    main()
