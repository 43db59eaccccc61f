"""Experiment harness.

``rumodp {learn,game,market,bounds} --config run.json [--seed S]
[--out-dir DIR] [--eta VALUE|optimal]``

The config is a JSON document checked against
``schemas/experiment.schema.json`` before anything runs.  Outputs go to
``--out-dir``, else the config's ``output.dir``, else ``$RUMODP_OUT_DIR``,
else ``./rumodp-out``.  Exit status: 0 when every audit passes, 1 when an
invariant audit fails, 2 for invalid configs or inputs.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import io as rio
from .environments import EnvironmentConfig, generate
from .errors import AuditFailure, DegenerateModelError, DomainError, PayoffBoundError, ValidationError
from .games import (
    NormalFormGame,
    SmoothnessParams,
    cce_check,
    dynamics_table,
    load_game,
    run_dynamics,
    welfare_bound_check,
)
from .gev import GevSpec, model_constants, social_surplus, table1_specs
from .learners import predictions, ssa_trajectory
from .market import load_trades, run_market, validity_audit
from .regret import (
    bound_curve,
    bounds_table,
    format_table,
    measured_drift,
    oftrl_bound,
    optimal_eta,
    regret_bound,
    regret_curve,
)

OUT_ENV = "RUMODP_OUT_DIR"
DEFAULT_OUT = "rumodp-out"
EXIT_OK, EXIT_AUDIT, EXIT_INVALID = 0, 1, 2
SIMPLEX_TOL = 1e-10


class Audit:
    """Collects named checks; each failure keeps a witness."""

    def __init__(self):
        self.checks = {}
        self.failures = []

    def check(self, name: str, ok: bool, witness=None, detail: str = "") -> None:
        ok = bool(ok)
        self.checks[name] = ok
        if not ok:
            self.failures.append({"property": name, "witness": witness, "detail": detail})

    @property
    def ok(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict:
        return {"ok": self.ok, "checks": self.checks, "failures": self.failures}


class Run:
    """A parsed config plus the command-line overrides."""

    def __init__(self, kind: str, cfg: dict, base: Path, seed=None, eta=None, out_dir=None):
        if cfg.get("kind", kind) != kind:
            raise ValidationError(f"config is for {cfg['kind']!r}, not {kind!r}")
        self.kind = kind
        self.cfg = cfg
        self.base = base
        self.seed = seed if seed is not None else cfg.get("seed", 0)
        self.eta = eta if eta is not None else cfg.get("eta", "optimal")
        out = out_dir or cfg.get("output", {}).get("dir") or os.environ.get(OUT_ENV) or DEFAULT_OUT
        self.out_dir = Path(out)
        self.prefix = cfg.get("output", {}).get("prefix", kind)

    def path(self, key: str) -> Path:
        p = Path(self.cfg[key])
        p = p if p.is_absolute() else self.base / p
        if not p.exists():
            raise ValidationError(f"field {key}: file {self.cfg[key]!r} does not exist")
        return p

    def spec(self, key: str = "spec", doc=None) -> GevSpec:
        try:
            return rio.spec_from_dict(doc if doc is not None else self.cfg[key], source=f"field {key}")
        except (ValidationError, DomainError) as exc:
            raise ValidationError(f"field {key}: {exc}") from exc

    def artifact(self, suffix: str) -> Path:
        return self.out_dir / f"{self.prefix}_{suffix}"


def _simplex(audit: Audit, name: str, X: np.ndarray) -> None:
    X = np.atleast_2d(X)
    lo = X.min(axis=1)
    gap = np.abs(X.sum(axis=1) - 1)
    bad = np.flatnonzero((lo < 0) | (gap > SIMPLEX_TOL))
    witness = int(bad[0]) + 1 if bad.size else None
    audit.check(name, bad.size == 0, witness, "row leaves the simplex" if bad.size else "")


def _constants_doc(spec: GevSpec) -> dict:
    mc = model_constants(spec)
    return {"variant": spec.variant, "n": spec.n, "L": mc.L, "M": mc.M, "log_g1": mc.surplus_at_zero, "log_n": mc.log_n}


# -- learn ----------------------------------------------------------------


def run_learn(run: Run) -> Audit:
    cfg = run.cfg
    spec = run.spec()
    T = cfg["T"]
    env_doc = cfg.get("environment")
    if env_doc is not None:
        u_max = env_doc.get("u_max", cfg.get("u_max", 1.0))
        means = env_doc.get("means")
        env = EnvironmentConfig(
            kind=env_doc["kind"],
            n=spec.n,
            T=T,
            u_max=u_max,
            seed=run.seed,
            B=env_doc.get("B"),
            sigma=env_doc.get("sigma"),
            means=tuple(means) if means is not None else None,
            period=env_doc.get("period"),
        )
        U = generate(env)
    else:
        U = rio.read_stream(run.path("payoffs_file"))
        if U.shape[1] != spec.n:
            raise ValidationError(f"field payoffs_file: {U.shape[1]} columns for a model with {spec.n} alternatives")
        if U.shape[0] < T:
            raise ValidationError(f"field payoffs_file: {U.shape[0]} rows, fewer than T={T}")
        U = U[:T]
        sup = float(np.abs(U).max()) if U.size else 0.0
        u_max = cfg.get("u_max", sup if sup > 0 else 1.0)
        if sup > u_max:
            raise PayoffBoundError(f"field payoffs_file: payoff sup-norm {sup} exceeds u_max={u_max}")

    pred = cfg.get("predictor", {"kind": "none"})
    kind, S, delta = pred["kind"], pred.get("S"), pred.get("delta")
    if kind == "s_step" and S is None:
        raise ValidationError("field predictor.S: required for the s_step predictor")
    if kind == "geometric" and delta is None:
        raise ValidationError("field predictor.delta: required for the geometric predictor")
    B = pred.get("B")
    if B is None:
        B = env_doc["B"] if env_doc is not None and env_doc["kind"] == "slow_drift" and env_doc.get("B") else 2 * u_max

    if run.eta == "optimal":
        eta = optimal_eta(spec, T, u_max) if kind == "none" else oftrl_bound(spec, T, B, kind, S, delta).eta
    else:
        eta = float(run.eta)

    X = ssa_trajectory(spec, eta, U, kind, S, delta)
    curve = regret_curve(X, U)
    t = np.arange(1, T + 1)
    mc = model_constants(spec)
    if kind == "none":
        bound = bound_curve(mc, t, u_max, eta)
    else:
        beta = predictions(kind, U, S, delta)
        dev = np.abs(U - beta).max(axis=1)
        bound = eta * mc.surplus_at_zero + mc.L / (2 * eta) * np.cumsum(dev**2)

    audit = Audit()
    _simplex(audit, "simplex", X)
    slack = bound - curve
    worst = int(np.argmin(slack))
    audit.check(
        "regret_le_bound",
        slack[worst] >= -1e-9 * max(1.0, abs(bound[worst])),
        int(t[worst]),
        f"regret {curve[worst]:.12g} above bound {bound[worst]:.12g}",
    )

    run.out_dir.mkdir(parents=True, exist_ok=True)
    rio.write_csv(
        run.artifact("regret.csv"),
        ["t", "regret", "avg_regret", "bound_at_t", "eta"],
        ([int(ti), r, r / ti, b, eta] for ti, r, b in zip(t, curve, bound)),
    )
    n = spec.n
    header = ["t", *(f"x_{i + 1}" for i in range(n)), *(f"u_{i + 1}" for i in range(n)), "expected_payoff"]
    ux = np.einsum("ti,ti->t", U, X)
    rio.write_csv(
        run.artifact("trajectory.csv"),
        header,
        ([int(ti), *x, *u, v] for ti, x, u, v in zip(t, X, U, ux)),
        prob_cols=range(1, n + 1),
    )
    summary = {
        "schema_version": rio.SCHEMA_VERSION,
        "kind": "learn",
        "model": _constants_doc(spec),
        "environment": env_doc,
        "predictor": pred,
        "seed": run.seed,
        "T": T,
        "u_max": u_max,
        "eta": eta,
        "final_regret": float(curve[-1]),
        "final_bound": float(bound[-1]),
        "optimized_bound": regret_bound(mc, T, u_max).bound if kind == "none" else oftrl_bound(mc, T, B, kind, S, delta).bound,
        "measured_drift": measured_drift(U),
        "audit": audit.to_dict(),
    }
    rio.write_json(run.artifact("summary.json"), summary)
    return audit


# -- game -----------------------------------------------------------------


def _game(run: Run) -> NormalFormGame:
    cfg = run.cfg
    try:
        if "game" in cfg:
            return NormalFormGame.from_dict(cfg["game"])
        if "game_file" in cfg:
            return load_game(run.path("game_file"))
    except ValueError as exc:
        raise ValidationError(f"game: {exc}") from exc
    rg = cfg["random_game"]
    return NormalFormGame.random(rg["players"], rg["strategies"], np.random.default_rng(run.seed))


def run_game(run: Run) -> Audit:
    cfg = run.cfg
    game = _game(run)
    T = cfg["T"]
    p, n = game.players, game.strategies
    if "specs" in cfg:
        docs = cfg["specs"]
        docs = list(docs.values()) if isinstance(docs, dict) else docs
        specs = [run.spec(f"specs[{j}]", d) for j, d in enumerate(docs)]
    elif "spec" in cfg:
        specs = [run.spec()] * p
    else:
        specs = [GevSpec.mnl(n)] * p
    if len(specs) != p or any(s.n != n for s in specs):
        raise ValidationError(f"field specs: need {p} specs with {n} alternatives each")
    etas = None if run.eta == "optimal" else [float(run.eta)] * p
    result = run_dynamics(game, specs, T, etas)
    regrets = result.regrets()

    audit = Audit()
    for j in range(p):
        _simplex(audit, f"simplex_player_{j + 1}", result.distribution.histories[j])
        b = regret_bound(specs[j], T, 1.0, eta=result.etas[j]).bound
        audit.check(f"regret_le_bound_player_{j + 1}", regrets[j] <= b + 1e-9 * max(1.0, b), j + 1, f"regret {regrets[j]:.12g} above bound {b:.12g}")
    delta = max(regrets) / T
    cce = cce_check(game, result.distribution, delta)
    jw, kw = np.unravel_index(int(np.argmin(cce.margins)), cce.margins.shape)
    audit.check("cce", cce.ok, [int(jw) + 1, int(kw)], f"worst margin {cce.worst_margin:.3e}")

    report = {
        "schema_version": rio.SCHEMA_VERSION,
        "kind": "game",
        "players": p,
        "strategies": n,
        "T": T,
        "seed": run.seed,
        "models": [_constants_doc(s) for s in specs],
        "etas": [float(e) for e in result.etas],
        "regrets": [float(r) for r in regrets],
        "cce": {"delta": float(delta), "worst_margin": cce.worst_margin, "ok": cce.ok},
    }
    if "smoothness" in cfg:
        sm = cfg["smoothness"]
        try:
            if "lambda" in sm:
                smooth = SmoothnessParams.verified(game, sm["lambda"], sm["mu"], sm["s_star"])
            else:
                smooth = SmoothnessParams.best_lambda(game, sm["mu"], sm["s_star"])
        except ValidationError as exc:
            audit.check("smoothness", False, sm["s_star"], str(exc))
            smooth = None
        if smooth is not None:
            w = welfare_bound_check(game, smooth, result)
            audit.check("welfare_bound", w.ok, None, f"slack {w.slack:.3e}")
            report["welfare"] = {
                "lambda": smooth.lam,
                "mu": smooth.mu,
                "price_of_anarchy": w.price_of_anarchy,
                "average_welfare": w.average_welfare,
                "opt": w.opt,
                "lower_bound": w.lower_bound,
                "regret_term": w.regret_term,
                "ok": w.ok,
            }
    report["audit"] = audit.to_dict()

    run.out_dir.mkdir(parents=True, exist_ok=True)
    table = dynamics_table(result, game)
    header = ["t", *(f"regret_{j + 1}" for j in range(p)), "welfare"]
    rio.write_csv(run.artifact("dynamics.csv"), header, ([int(r[0]), *r[1:]] for r in table))
    rio.write_json(run.artifact("report.json"), report)
    return audit


# -- market ---------------------------------------------------------------


def run_market_cmd(run: Run) -> Audit:
    cfg = run.cfg
    spec = run.spec()
    if run.eta == "optimal":
        b = cfg.get("b", 1.0)
    else:
        b = float(run.eta)
    if "trades" in cfg:
        trades = [np.asarray(r, float) for r in cfg["trades"]]
    else:
        trades = load_trades(run.path("trades_file"))
    for i, r in enumerate(trades):
        if r.shape != (spec.n,):
            raise ValidationError(f"trade {i + 1}: expected {spec.n} entries, got {r.size}")
    q0 = cfg.get("q0")
    if q0 is not None and len(q0) != spec.n:
        raise ValidationError(f"field q0: expected {spec.n} entries")
    traj = run_market(spec, b, trades, cfg.get("T"), q0)

    audit = Audit()
    _simplex(audit, "price_simplex", traj.prices)
    c_first = social_surplus(spec, traj.q[0], b)
    c_last = social_surplus(spec, traj.q[-1], b)
    total = float(np.sum(traj.charges))
    gap = abs(total - (c_last - c_first))
    audit.check("path_independence", gap <= 1e-9 * max(1.0, abs(total)), None, f"gap {gap:.3e}")
    report = validity_audit(spec, b, cfg.get("audit_samples", 200), run.seed)
    for prop, witness, detail in report.failures:
        audit.check(prop, False, witness, detail)
    for prop in ("differentiability", "monotonicity", "translation_invariance", "price_nonnegativity", "price_normalization"):
        audit.checks.setdefault(prop, True)

    run.out_dir.mkdir(parents=True, exist_ok=True)
    n = spec.n
    header = ["t", *(f"q_{i + 1}" for i in range(n)), *(f"p_{i + 1}" for i in range(n)), "charge"]
    rio.write_csv(
        run.artifact("trajectory.csv"),
        header,
        ([int(r[0]), *r[1:]] for r in traj.table()),
        prob_cols=range(n + 1, 2 * n + 1),
    )
    doc = {
        "schema_version": rio.SCHEMA_VERSION,
        "kind": "market",
        "model": _constants_doc(spec),
        "b": b,
        "trades": len(traj.charges),
        "total_charge": total,
        "cost_change": float(c_last - c_first),
        "worst_case_loss": float(b * model_constants(spec).surplus_at_zero),
        "audit_samples": report.samples,
        "seed": run.seed,
        "audit": audit.to_dict(),
    }
    rio.write_json(run.artifact("audit.json"), doc)
    return audit


# -- bounds ---------------------------------------------------------------


def run_bounds(run: Run) -> Audit:
    cfg = run.cfg
    T = cfg.get("T", 10_000)
    u_max = cfg.get("u_max", 1.0)
    if "specs" in cfg:
        docs = cfg["specs"]
        if isinstance(docs, dict):
            specs = {name: run.spec(f"specs.{name}", d) for name, d in docs.items()}
        else:
            specs = [run.spec(f"specs[{j}]", d) for j, d in enumerate(docs)]
    else:
        specs = table1_specs(cfg.get("table1", {}).get("n", 10))
    try:
        rows = bounds_table(specs, T, u_max)
    except DegenerateModelError as exc:
        raise ValidationError(str(exc)) from exc
    columns = list(rows[0].keys())
    if run.eta != "optimal":
        eta = float(run.eta)
        for row, spec in zip(rows, specs.values() if isinstance(specs, dict) else specs):
            row["eta_fixed"] = eta
            row["bound_fixed"] = regret_bound(spec, T, u_max, eta=eta).bound
        columns += ["eta_fixed", "bound_fixed"]

    audit = Audit()
    for row in rows:
        name = row["model"]
        audit.check(f"lipschitz_constant_{name}", row["L"] >= 1 - 1e-12, name, f"L = {row['L']}")
        audit.check(f"surplus_at_zero_{name}", 0 < row["log_g1"] <= row["log_n"] + 1e-12, name, f"log G(1) = {row['log_g1']}")

    run.out_dir.mkdir(parents=True, exist_ok=True)
    rio.write_csv(run.artifact("table.csv"), columns, ([r[c] for c in columns] for r in rows))
    run.artifact("table.txt").write_text(format_table(rows, columns) + "\n")
    return audit


COMMANDS = {"learn": run_learn, "game": run_game, "market": run_market_cmd, "bounds": run_bounds}


# -- entry point ----------------------------------------------------------


def _eta_arg(value: str):
    if value == "optimal":
        return value
    try:
        eta = float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive number or 'optimal', got {value!r}")
    if not (eta > 0 and math.isfinite(eta)):
        raise argparse.ArgumentTypeError(f"eta must be positive and finite, got {value!r}")
    return eta


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rumodp", description="Run regret, game and market experiments over GEV models.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, required=name != "bounds", help="JSON experiment config")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out-dir", type=Path, help=f"output directory (default: ${OUT_ENV} or ./{DEFAULT_OUT})")
        p.add_argument("--eta", type=_eta_arg, help="learning rate (liquidity for markets) or 'optimal'")
    return parser


def load_config(path: Path) -> tuple[dict, Path]:
    try:
        text = path.read_text()
    except OSError as exc:
        raise ValidationError(f"{path}: cannot read config ({exc.strerror})") from exc
    doc = rio.parse_json(text, str(path))
    rio.validate_document(doc, "experiment", text, str(path))
    return doc, path.resolve().parent


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.config is None:
            cfg, base = {"kind": args.command}, Path.cwd()
        else:
            cfg, base = load_config(args.config)
        if args.seed is not None and args.seed < 0:
            raise ValidationError("--seed must be nonnegative")
        run = Run(args.command, cfg, base, args.seed, args.eta, args.out_dir)
        audit = COMMANDS[args.command](run)
    except (ValidationError, DomainError, PayoffBoundError) as exc:
        print(f"rumodp: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except AuditFailure as exc:
        print(f"rumodp: audit failed: {exc}", file=sys.stderr)
        return EXIT_AUDIT
    for f in audit.failures:
        print(f"rumodp: audit failed: {f['property']} at {f['witness']!r}: {f['detail']}", file=sys.stderr)
    print(f"rumodp {args.command}: {'ok' if audit.ok else 'FAILED'} -> {run.out_dir}")
    return EXIT_OK if audit.ok else EXIT_AUDIT


if __name__ == "__main__":
    sys.exit(main())
