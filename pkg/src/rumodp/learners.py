"""Online learners: SSA, FTRL, the closed-form recursions and optimistic play.

Learner states are immutable values; ``ssa_update`` and the recursive steps
return new states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConvergenceError, DomainError, PayoffBoundError, UnsupportedVariantError, ValidationError
from .gev import GevSpec, choice_probabilities, regularizer_gradient

PREDICTOR_KINDS = ("none", "one_step", "s_step", "geometric")

_FLOOR = 1e-300


# -- predictors -----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Predictor:
    """Recency-bias predictor of the next payoff vector.

    ``one_step`` predicts the last payoff, ``s_step`` the mean of the last
    ``S`` payoffs (or of all payoffs seen so far while fewer than ``S``
    exist), and ``geometric`` a weighted mean whose weights grow by a factor
    ``1 / delta`` per period.  The geometric sums are kept in the normalized
    recurrence ``sum <- delta * sum + u`` so nothing overflows on long runs.
    """

    kind: str = "none"
    S: int | None = None
    delta: float | None = None
    buffer: tuple = ()
    weighted_sum: np.ndarray | None = None
    weight_total: float = 0.0

    def __post_init__(self):
        if self.kind not in PREDICTOR_KINDS:
            raise ValidationError(f"unknown predictor kind {self.kind!r}")
        if self.kind == "s_step" and (self.S is None or int(self.S) < 1):
            raise ValidationError("s_step predictor needs S >= 1")
        if self.kind == "geometric" and not (self.delta is not None and 0 < self.delta < 1):
            raise DomainError("geometric predictor needs delta in (0, 1)")

    @classmethod
    def one_step(cls) -> "Predictor":
        return cls("one_step")

    @classmethod
    def s_step(cls, S: int) -> "Predictor":
        return cls("s_step", S=int(S))

    @classmethod
    def geometric(cls, delta: float) -> "Predictor":
        return cls("geometric", delta=float(delta))

    def observe(self, u) -> "Predictor":
        u = np.asarray(u, dtype=float)
        if self.kind == "none":
            return self
        if self.kind == "one_step":
            return replace(self, buffer=(u,))
        if self.kind == "s_step":
            return replace(self, buffer=(self.buffer + (u,))[-self.S :])
        ws = u.copy() if self.weighted_sum is None else self.delta * self.weighted_sum + u
        return replace(self, weighted_sum=ws, weight_total=self.delta * self.weight_total + 1.0)

    def value(self, n: int) -> np.ndarray:
        """Prediction for the coming period; the zero vector before any data."""
        if self.kind == "none":
            return np.zeros(n)
        if self.kind == "geometric":
            if self.weighted_sum is None:
                return np.zeros(n)
            return self.weighted_sum / self.weight_total
        if not self.buffer:
            return np.zeros(n)
        return np.mean(self.buffer, axis=0)


def predictor_value(p: Predictor, t: int, n: int | None = None) -> np.ndarray:
    """Prediction used at period ``t`` (1-based) given what ``p`` has observed."""
    if t < 1:
        raise DomainError("periods start at 1")
    if n is None:
        if p.buffer:
            n = len(p.buffer[-1])
        elif p.weighted_sum is not None:
            n = p.weighted_sum.size
        else:
            raise ValidationError("cannot infer the dimension of an empty predictor")
    return p.value(n)


def predictions(kind: str, payoffs: np.ndarray, S: int | None = None, delta: float | None = None) -> np.ndarray:
    """All predictions ``beta_1 .. beta_T`` for a known payoff stream.

    Row ``t - 1`` is the prediction made before ``u_t`` is revealed.  This is
    the batched equivalent of feeding the stream through :class:`Predictor`.
    """
    payoffs = np.asarray(payoffs, dtype=float)
    T, n = payoffs.shape
    beta = np.zeros((T, n))
    if kind == "none" or T == 0:
        return beta
    if kind == "one_step":
        beta[1:] = payoffs[:-1]
        return beta
    if kind == "s_step":
        csum = np.vstack([np.zeros(n), np.cumsum(payoffs, axis=0)])
        t = np.arange(1, T)
        lo = np.maximum(t - S, 0)
        beta[1:] = (csum[t] - csum[lo]) / (t - lo)[:, None]
        return beta
    if kind == "geometric":
        p = Predictor.geometric(delta)
        for t in range(1, T):
            p = p.observe(payoffs[t - 1])
            beta[t] = p.value(n)
        return beta
    raise ValidationError(f"unknown predictor kind {kind!r}")


# -- social surplus algorithm --------------------------------------------


@dataclass(frozen=True, eq=False)
class LearnerState:
    spec: GevSpec
    eta: float
    theta: np.ndarray
    t: int = 0
    predictor: Predictor | None = None
    u_max: float = math.inf

    @classmethod
    def fresh(cls, spec: GevSpec, eta: float, predictor: Predictor | None = None, u_max: float = math.inf):
        if not eta > 0:
            raise DomainError(f"eta must be positive, got {eta}")
        return cls(spec, float(eta), np.zeros(spec.n), 0, predictor, u_max)


def ssa_choose(state: LearnerState) -> np.ndarray:
    """Choice for the next period: ``grad phi(theta + beta)``.

    ``beta`` is the predictor's forecast, or zero without a predictor.
    """
    theta = state.theta
    if state.predictor is not None and state.predictor.kind != "none":
        theta = theta + state.predictor.value(state.spec.n)
    return choice_probabilities(state.spec, theta, state.eta)


def ssa_update(state: LearnerState, u) -> LearnerState:
    u = np.asarray(u, dtype=float)
    if u.shape != (state.spec.n,):
        raise ValidationError(f"payoff must have shape ({state.spec.n},), got {u.shape}")
    if not np.all(np.isfinite(u)) or np.max(np.abs(u)) > state.u_max:
        raise PayoffBoundError(f"payoff sup-norm {np.max(np.abs(u))} exceeds u_max={state.u_max}")
    pred = state.predictor.observe(u) if state.predictor is not None else None
    return replace(state, theta=state.theta + u, t=state.t + 1, predictor=pred)


def run_ssa(spec: GevSpec, eta: float, payoffs, predictor: Predictor | None = None, u_max: float = math.inf) -> np.ndarray:
    """Play the SSA step by step against a payoff stream; returns the choices (T, N)."""
    state = LearnerState.fresh(spec, eta, predictor, u_max)
    xs = []
    for u in np.asarray(payoffs, dtype=float):
        xs.append(ssa_choose(state))
        state = ssa_update(state, u)
    return np.array(xs).reshape(-1, spec.n)


def ssa_trajectory(
    spec: GevSpec,
    eta: float,
    payoffs,
    predictor: str = "none",
    S: int | None = None,
    delta: float | None = None,
) -> np.ndarray:
    """Batched SSA choices against an oblivious stream.

    Equivalent to :func:`run_ssa` since the stream does not react to the
    learner: ``x_t = grad phi(theta_{t-1} + beta_t)`` for all ``t`` at once.
    """
    payoffs = np.asarray(payoffs, dtype=float)
    theta_prev = np.vstack([np.zeros(spec.n), np.cumsum(payoffs, axis=0)[:-1]])
    return choice_probabilities(spec, theta_prev + predictions(predictor, payoffs, S, delta), eta)


# -- FTRL via an independent primal solver --------------------------------


def ftrl_solve(
    spec: GevSpec,
    theta,
    eta: float,
    tol: float = 1e-12,
    max_iter: int = 100_000,
    x0=None,
) -> np.ndarray:
    """``argmax_{x in simplex} <theta, x> - R(x)`` by entropic mirror ascent.

    Only the regularizer and its gradient are used, never the surplus
    gradient, so the result is an independent check of the duality
    ``grad phi(theta) = argmax``.  The step is ``1 / eta``, the smoothness
    constant of R relative to the negative entropy.  Stops when the spread
    of the scaled objective gradient, ``max - min`` of
    ``(theta - grad R(x)) / eta``, falls below ``tol``.
    """
    if spec.variant not in ("MNL", "NL"):
        raise UnsupportedVariantError(f"FTRL needs a closed-form regularizer; {spec.variant} has none")
    if tol < 1e-12:
        raise DomainError("tol below 1e-12 is not attainable in double precision")
    theta = np.asarray(theta, dtype=float)
    z = (theta - theta.max()) / eta
    x = np.full(spec.n, 1.0 / spec.n) if x0 is None else np.asarray(x0, float)
    best, best_res = x, math.inf
    for _ in range(max_iter):
        g = z - regularizer_gradient(spec, x, eta) / eta
        res = float(g.max() - g.min())
        if res < best_res:
            best, best_res = x, res
        if res < tol:
            return x
        logits = np.log(x) + g
        logits -= logits.max()
        x = np.exp(logits)
        x /= x.sum()
        x = np.maximum(x, _FLOOR)
    raise ConvergenceError(f"mirror ascent stalled at residual {best_res:.3e}", best, best_res)


# -- closed-form recursions -----------------------------------------------


@dataclass(frozen=True, eq=False)
class RecursiveState:
    x: np.ndarray
    spec: GevSpec
    eta: float

    @classmethod
    def initial(cls, spec: GevSpec, eta: float) -> "RecursiveState":
        return cls(choice_probabilities(spec, np.zeros(spec.n), eta), spec, eta)


def _interior(x: np.ndarray) -> np.ndarray:
    x = np.maximum(np.asarray(x, dtype=float), _FLOOR)
    return x / x.sum()


def ewa_step(state: RecursiveState, u) -> RecursiveState:
    """Exponential weights: ``x_i <- x_i exp(u_i / eta) / normalizer``."""
    if state.spec.variant != "MNL" and not np.all(state.spec.lambdas == 1):
        raise UnsupportedVariantError("exponential weights is the MNL recursion")
    u = np.asarray(u, dtype=float)
    logits = np.log(_interior(state.x)) + (u - u.max()) / state.eta
    logits -= logits.max()
    x = np.exp(logits)
    return replace(state, x=x / x.sum())


def _require_nl(spec: GevSpec):
    if spec.variant not in ("NL", "MNL"):
        raise UnsupportedVariantError("closed-form Phi/H maps exist for NL only")


def phi_map(spec: GevSpec, x) -> np.ndarray:
    """``Phi_i(x) = x_i^lambda_k * S_k^(1 - lambda_k)`` for ``i`` in nest ``k``."""
    _require_nl(spec)
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    for lam, mem in zip(spec.lambdas, spec.members):
        mem = list(mem)
        s = x[..., mem].sum(axis=-1, keepdims=True)
        out[..., mem] = x[..., mem] ** lam * s ** (1.0 - lam)
    return out


def h_map(spec: GevSpec, y) -> np.ndarray:
    """Gradient of the generator scaled by ``y``: ``H_i(y) = y_i G_i(y)``.

    For NL, ``H_i(y) = y_i^(1/lambda_k) * (sum_{j in k} y_j^(1/lambda_k))^(lambda_k - 1)``,
    the inverse of :func:`phi_map`.
    """
    _require_nl(spec)
    y = np.asarray(y, dtype=float)
    out = np.empty_like(y)
    for lam, mem in zip(spec.lambdas, spec.members):
        mem = list(mem)
        logy = np.log(y[..., mem]) / lam
        top = logy.max(axis=-1, keepdims=True)
        log_s = top + np.log(np.exp(logy - top).sum(axis=-1, keepdims=True))
        out[..., mem] = np.exp(logy + (lam - 1.0) * log_s)
    return out


@dataclass(frozen=True)
class NLStepDiagnostic:
    """Factorization ``x_i = Phi_i^(1/lambda_k) * P(i | k) * P(k)`` of one NL step."""

    phi_power: np.ndarray
    within: np.ndarray
    nest: np.ndarray

    def product(self) -> np.ndarray:
        return self.phi_power * self.within * self.nest


def nl_recursive_step(state: RecursiveState, u, diagnostic: bool = False):
    """One NL recursion step ``x' = H(Phi(x) e^(u/eta)) / sum H(...)``.

    Computed in log space.  With ``diagnostic=True`` also returns the
    per-alternative factorization; there the within-nest denominator uses
    ``Phi_j^(1/lambda_k)``, which is what makes the factors multiply back to
    ``x'``.
    """
    spec, eta = state.spec, state.eta
    _require_nl(spec)
    u = np.asarray(u, dtype=float)
    x = _interior(state.x)
    log_phi = np.log(phi_map(spec, x))
    log_y = log_phi + (u - u.max()) / eta
    n = spec.n
    log_h = np.empty(n)
    phi_power = np.empty(n)
    within = np.empty(n)
    nest_of = np.empty(n, dtype=int)
    inclusive = np.empty(spec.k)
    for k, (lam, mem) in enumerate(zip(spec.lambdas, spec.members)):
        mem = list(mem)
        a = log_y[mem] / lam
        top = a.max()
        log_s = top + math.log(np.exp(a - top).sum())
        log_h[mem] = a + (lam - 1.0) * log_s
        inclusive[k] = lam * log_s
        within[mem] = np.exp(a - log_s)
        phi_power[mem] = np.exp(log_phi[mem] / lam)
        nest_of[mem] = k
    log_h -= log_h.max()
    x_new = np.exp(log_h)
    x_new /= x_new.sum()
    new_state = replace(state, x=x_new)
    if not diagnostic:
        return new_state
    nest_p = np.exp(inclusive - inclusive.max())
    nest_p /= nest_p.sum()
    # within[] above is e^{u/(eta lam)} Phi^{1/lam} / sum(...); strip Phi^{1/lam}
    diag = NLStepDiagnostic(phi_power, within / phi_power, nest_p[nest_of])
    return new_state, diag
