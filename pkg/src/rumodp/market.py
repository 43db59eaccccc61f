"""Cost-function market maker whose cost is a GEV social surplus.

With the MNL spec this is the logarithmic market scoring rule,
``C(q) = b log sum_i exp(q_i / b)``; the liquidity ``b`` plays the role of
the learning rate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable

import numpy as np

from .errors import AuditFailure, DomainError, ValidationError
from .gev import GevSpec, choice_probabilities, social_surplus


@dataclass(frozen=True, eq=False)
class MarketState:
    spec: GevSpec
    b: float
    q: np.ndarray
    ledger: tuple = ()

    @classmethod
    def open(cls, spec: GevSpec, b: float, q0=None) -> "MarketState":
        if not b > 0:
            raise DomainError(f"liquidity b must be positive, got {b}")
        q = np.zeros(spec.n) if q0 is None else np.asarray(q0, dtype=float)
        if q.shape != (spec.n,):
            raise ValidationError(f"q0 must have length {spec.n}")
        return cls(spec, float(b), q)


def cost(state: MarketState) -> float:
    return social_surplus(state.spec, state.q, state.b)


def prices(state: MarketState) -> np.ndarray:
    return choice_probabilities(state.spec, state.q, state.b)


def execute_trade(state: MarketState, r) -> tuple[MarketState, float]:
    """Sell the bundle ``r`` (negative entries are sales) for ``C(q + r) - C(q)``."""
    r = np.asarray(r, dtype=float)
    if r.shape != state.q.shape or not np.all(np.isfinite(r)):
        raise ValidationError(f"trade must be a finite vector of length {state.q.size}")
    q_new = state.q + r
    charge = social_surplus(state.spec, q_new, state.b) - cost(state)
    new = replace(state, q=q_new, ledger=state.ledger + ((r, charge),))
    return new, charge


@dataclass
class MarketTrajectory:
    """Row ``t`` holds the shares and prices after ``t`` trades (row 0: opening)."""

    q: np.ndarray
    prices: np.ndarray
    charges: np.ndarray
    final: MarketState

    def table(self) -> np.ndarray:
        T = len(self.charges)
        charges = np.concatenate([[0.0], self.charges])
        return np.column_stack([np.arange(T + 1), self.q, self.prices, charges])


def run_market(spec: GevSpec, b: float, trades: Iterable, T: int | None = None, q0=None) -> MarketTrajectory:
    """Post prices, take each bundle, update shares; at most ``T`` trades."""
    state = MarketState.open(spec, b, q0)
    qs, ps, charges = [state.q], [prices(state)], []
    for t, r in enumerate(trades):
        if T is not None and t >= T:
            break
        state, c = execute_trade(state, r)
        p = prices(state)
        if p.min() < 0 or abs(p.sum() - 1) > 1e-10:
            raise AuditFailure("no-arbitrage prices", state.q.tolist(), f"prices {p}")
        qs.append(state.q)
        ps.append(p)
        charges.append(c)
    return MarketTrajectory(np.array(qs), np.array(ps), np.array(charges), state)


def load_trades(path) -> list[np.ndarray]:
    """One bundle per line: a JSON array or an object with key ``"r"``.

    Blank lines and lines starting with ``#`` are skipped.
    """
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}:{lineno}: {exc.msg}") from exc
            r = doc["r"] if isinstance(doc, dict) else doc
            if not isinstance(r, list) or not all(isinstance(v, (int, float)) for v in r):
                raise ValidationError(f"{path}:{lineno}: trade must be a list of numbers")
            out.append(np.asarray(r, dtype=float))
    return out


@dataclass
class AuditReport:
    samples: int
    failures: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def passed(self, prop: str) -> bool:
        return all(f[0] != prop for f in self.failures)

    def check(self) -> None:
        if self.failures:
            prop, witness, detail = self.failures[0]
            raise AuditFailure(prop, witness, detail)


PROPERTIES = ("differentiability", "monotonicity", "translation_invariance", "price_nonnegativity", "price_normalization")


def validity_audit(
    spec: GevSpec,
    b: float,
    samples: int = 200,
    seed: int = 0,
    cost_fn: Callable | None = None,
    price_fn: Callable | None = None,
    scale: float = 5.0,
) -> AuditReport:
    """Numerically audit a cost function on random share vectors.

    Checks that central differences of the cost match the posted prices
    (1e-6), that ``q >= q'`` implies ``C(q) >= C(q')``, that
    ``C(q + k 1) = C(q) + k`` (1e-10), and that prices are nonnegative and
    sum to one (1e-10).  ``cost_fn(q)`` and ``price_fn(q)`` override the
    surplus-based defaults so corrupted costs can be audited too.  The first
    failure of each property is recorded with its witness point.
    """
    if samples < 100:
        raise DomainError("use at least 100 samples")
    cost_fn = cost_fn or (lambda q: social_surplus(spec, q, b))
    price_fn = price_fn or (lambda q: choice_probabilities(spec, q, b))
    rng = np.random.default_rng(seed)
    report = AuditReport(samples)
    seen = set()

    def fail(prop, q, detail):
        if prop not in seen:
            seen.add(prop)
            report.failures.append((prop, np.round(q, 12).tolist(), detail))

    h = min(max(1e-5 * b * spec.min_lambda, 1e-7), 1e-4)
    for _ in range(samples):
        q = rng.uniform(-scale, scale, spec.n) * b
        p = np.asarray(price_fn(q), dtype=float)
        if p.min() < 0:
            fail("price_nonnegativity", q, f"min price {p.min()}")
        if abs(p.sum() - 1) > 1e-10:
            fail("price_normalization", q, f"prices sum to {p.sum()}")
        fd = np.array([(cost_fn(q + h * e) - cost_fn(q - h * e)) / (2 * h) for e in np.eye(spec.n)])
        if np.max(np.abs(fd - p)) > 1e-6:
            fail("differentiability", q, f"finite-difference gap {np.max(np.abs(fd - p)):.3e}")
        lower = q - rng.exponential(scale * b / 2, spec.n) * (rng.uniform(size=spec.n) < 0.7)
        if cost_fn(q) < cost_fn(lower) - 1e-12:
            fail("monotonicity", q, f"C(q)={cost_fn(q)} < C(q')={cost_fn(lower)} for q' <= q")
        k = rng.uniform(-scale, scale) * b
        gap = cost_fn(q + k) - cost_fn(q) - k
        if abs(gap) > 1e-10:
            fail("translation_invariance", q, f"C(q + k1) - C(q) - k = {gap:.3e} at k={k}")
    return report
