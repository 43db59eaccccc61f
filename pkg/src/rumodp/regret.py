"""Regret accounting, theoretical bounds and Hannan-consistency diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateModelError, DomainError, PayoffBoundError, ValidationError
from .gev import GevSpec, ModelConstants, choice_probabilities, model_constants, social_surplus


@dataclass
class RegretLedger:
    """History of (choice, payoff) pairs.  Append-only, single writer."""

    n: int
    u_max: float = math.inf
    xs: list = field(default_factory=list)
    us: list = field(default_factory=list)

    def record(self, x, u) -> None:
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        if x.shape != (self.n,) or u.shape != (self.n,):
            raise ValidationError("choice and payoff must both have length n")
        if np.max(np.abs(u)) > self.u_max:
            raise PayoffBoundError(f"payoff sup-norm {np.max(np.abs(u))} exceeds u_max={self.u_max}")
        self.xs.append(x)
        self.us.append(u)

    @classmethod
    def from_arrays(cls, xs, us, u_max: float = math.inf) -> "RegretLedger":
        xs = np.asarray(xs, dtype=float)
        us = np.asarray(us, dtype=float)
        if xs.shape != us.shape:
            raise ValidationError(f"shape mismatch: {xs.shape} vs {us.shape}")
        if us.size and np.max(np.abs(us)) > u_max:
            raise PayoffBoundError(f"payoff sup-norm {np.max(np.abs(us))} exceeds u_max={u_max}")
        return cls(xs.shape[1], u_max, list(xs), list(us))

    def __len__(self):
        return len(self.us)

    @property
    def X(self) -> np.ndarray:
        return np.array(self.xs).reshape(-1, self.n)

    @property
    def U(self) -> np.ndarray:
        return np.array(self.us).reshape(-1, self.n)


def regret(ledger: RegretLedger) -> float:
    """``max_i theta_iT - sum_t <u_t, x_t>``."""
    if len(ledger) == 0:
        raise ValidationError("regret of an empty ledger is undefined")
    U, X = ledger.U, ledger.X
    return float(U.sum(axis=0).max() - np.einsum("ti,ti->", U, X))


def best_in_hindsight(ledger: RegretLedger) -> int:
    """Index of the best fixed alternative; ties go to the lowest index."""
    return int(np.argmax(ledger.U.sum(axis=0)))


def regret_curve(X, U) -> np.ndarray:
    """Regret after each period ``t = 1..T`` for choices ``X`` and payoffs ``U``."""
    X = np.asarray(X, dtype=float)
    U = np.asarray(U, dtype=float)
    return np.cumsum(U, axis=0).max(axis=1) - np.cumsum(np.einsum("ti,ti->t", U, X))


# -- bounds ---------------------------------------------------------------


@dataclass(frozen=True)
class BoundReport:
    model: str
    L: float
    surplus_at_zero: float
    eta: float
    bound: float
    T: int
    u_max: float | None = None
    B: float | None = None
    predictor: str | None = None


def _phi0(model: ModelConstants, use_log_n: bool) -> float:
    phi0 = model.log_n if use_log_n else model.surplus_at_zero
    if phi0 <= 0:
        raise DegenerateModelError("surplus at zero is 0 (a single alternative); the bound is trivial")
    return phi0


def _constants(model) -> ModelConstants:
    return model_constants(model) if isinstance(model, GevSpec) else model


def optimal_eta(model, T: int, u_max: float, use_log_n: bool = False) -> float:
    """``sqrt(L T u_max^2 / (2 phi(0)))`` with ``phi(0) = log G(1)`` by default."""
    model = _constants(model)
    if T < 1 or not u_max > 0:
        raise DomainError("need T >= 1 and u_max > 0")
    return math.sqrt(model.L * T * u_max**2 / (2 * _phi0(model, use_log_n)))


def regret_bound(model, T: int, u_max: float, eta: float | None = None, use_log_n: bool = False) -> BoundReport:
    """``eta phi(0) + L T u_max^2 / (2 eta)``; at the optimal eta this is
    ``u_max sqrt(2 phi(0) L T)``.
    """
    model = _constants(model)
    phi0 = _phi0(model, use_log_n)
    if eta is None:
        eta = optimal_eta(model, T, u_max, use_log_n)
        value = u_max * math.sqrt(2 * phi0 * model.L * T)
    else:
        if not eta > 0:
            raise DomainError("eta must be positive")
        value = eta * phi0 + model.L * T * u_max**2 / (2 * eta)
    return BoundReport(model.name, model.L, phi0, eta, value, T, u_max=u_max)


def bound_curve(model, t, u_max: float, eta: float, use_log_n: bool = False) -> np.ndarray:
    """Two-term bound at fixed ``eta`` evaluated at each horizon in ``t``."""
    model = _constants(model)
    phi0 = _phi0(model, use_log_n)
    t = np.asarray(t, dtype=float)
    return eta * phi0 + model.L * t * u_max**2 / (2 * eta)


def oftrl_bound(
    model,
    T: int,
    B: float,
    predictor: str = "one_step",
    S: int | None = None,
    delta: float | None = None,
    use_log_n: bool = False,
) -> BoundReport:
    """Optimized optimistic-FTRL bound for a predictor kind.

    one_step: ``B sqrt(2 L T phi0)``; s_step: ``S B sqrt(2 L T phi0)``;
    geometric: ``B sqrt(2 L T phi0 / (1 - delta)^3)``.
    """
    model = _constants(model)
    phi0 = _phi0(model, use_log_n)
    if not B > 0:
        raise DomainError("B must be positive")
    if predictor == "one_step":
        scale = 1.0
    elif predictor == "s_step":
        if S is None or S < 1:
            raise DomainError("s_step needs S >= 1")
        scale = float(S)
    elif predictor == "geometric":
        if delta is None or not 0 < delta < 1:
            raise DomainError(f"delta must lie in (0, 1), got {delta}")
        scale = (1 - delta) ** -1.5
    else:
        raise ValidationError(f"no OFTRL bound for predictor {predictor!r}")
    eta = math.sqrt(model.L * T * (scale * B) ** 2 / (2 * phi0))
    value = scale * B * math.sqrt(2 * model.L * T * phi0)
    return BoundReport(model.name, model.L, phi0, eta, value, T, B=B, predictor=predictor)


def oftrl_master_bound(model, eta: float, payoffs, beta, use_log_n: bool = False) -> float:
    """``eta phi0 + (L / 2 eta) sum_t ||u_t - beta_t||_inf^2``."""
    model = _constants(model)
    dev = np.abs(np.asarray(payoffs, float) - np.asarray(beta, float)).max(axis=1)
    return eta * _phi0(model, use_log_n) + model.L / (2 * eta) * float(np.sum(dev**2))


def measured_drift(payoffs) -> float:
    """``max_t ||u_t - u_{t-1}||_inf`` with ``u_0 = 0``."""
    U = np.asarray(payoffs, dtype=float)
    diffs = np.diff(np.vstack([np.zeros(U.shape[1]), U]), axis=0)
    return float(np.abs(diffs).max())


def bounds_table(specs, T: int, u_max: float) -> list[dict]:
    """One row per model: the closed-form (``log N``) row and the exact-``log G(1)`` row.

    ``specs`` is a mapping name -> spec or a sequence of specs.
    """
    items = specs.items() if hasattr(specs, "items") else ((s.variant, s) for s in specs)
    rows = []
    for name, spec in items:
        mc = model_constants(spec)
        closed = regret_bound(mc, T, u_max, use_log_n=True)
        exact = regret_bound(mc, T, u_max)
        rows.append(
            {
                "model": name,
                "variant": spec.variant,
                "n": spec.n,
                "min_lambda": spec.min_lambda,
                "L": mc.L,
                "log_n": mc.log_n,
                "log_g1": mc.surplus_at_zero,
                "T": T,
                "u_max": u_max,
                "eta_table": closed.eta,
                "bound_table": closed.bound,
                "eta_exact": exact.eta,
                "bound_exact": exact.bound,
            }
        )
    return rows


def format_table(rows: list[dict], columns: Sequence[str] | None = None) -> str:
    """Aligned plain-text rendering of :func:`bounds_table` rows."""
    if not rows:
        return ""
    columns = list(columns or rows[0].keys())

    def fmt(v):
        return f"{v:.6g}" if isinstance(v, float) else str(v)

    cells = [[fmt(r[c]) for c in columns] for r in rows]
    widths = [max(len(c), *(len(row[i]) for row in cells)) for i, c in enumerate(columns)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(columns, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(v.rjust(w) for v, w in zip(row, widths)) for row in cells]
    return "\n".join(lines)


def bregman_gap(spec: GevSpec, theta_prev, u, eta: float) -> float:
    """``phi(theta + u) - phi(theta) - <grad phi(theta), u>``."""
    theta_prev = np.asarray(theta_prev, dtype=float)
    u = np.asarray(u, dtype=float)
    # shift both points by the same constant; the gap is invariant to it
    c = theta_prev.max()
    a = theta_prev - c
    x = choice_probabilities(spec, a, eta)
    return float(social_surplus(spec, a + u, eta) - social_surplus(spec, a, eta) - x @ u)


# -- Hannan consistency ---------------------------------------------------


@dataclass(frozen=True)
class HannanFit:
    c: float
    r2: float
    loglog_slope: float


def hannan_fit(horizons: Iterable[int], regrets: Iterable[float]) -> HannanFit:
    """Fit average regret ``R_T / T`` to ``c / sqrt(T)`` by least squares.

    ``r2`` is the coefficient of determination of that one-parameter fit on
    the average-regret scale; ``loglog_slope`` is the free slope of
    ``log(R_T / T)`` on ``log T`` for reference (ideal: -1/2).
    """
    T = np.asarray(list(horizons), dtype=float)
    avg = np.asarray(list(regrets), dtype=float) / T
    f = T**-0.5
    c = float(f @ avg / (f @ f))
    ss_res = float(np.sum((avg - c * f) ** 2))
    ss_tot = float(np.sum((avg - avg.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    pos = avg > 0
    slope = float(np.polyfit(np.log(T[pos]), np.log(avg[pos]), 1)[0]) if pos.sum() >= 2 else float("nan")
    return HannanFit(c, r2, slope)
