"""Repeated normal-form games played by SSA learners.

Utilities are stored as one array per player with shape ``(N,) * P``;
entry ``s`` is ``u_j(s)`` for the pure profile ``s``.
"""

from __future__ import annotations

import itertools
import json
import math
import string
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .gev import GevSpec, choice_probabilities, model_constants
from .regret import RegretLedger, optimal_eta, regret, regret_curve

MAX_PROFILES = 10**6


@dataclass(frozen=True, eq=False)
class NormalFormGame:
    utilities: tuple

    def __post_init__(self):
        utils = tuple(np.asarray(u, dtype=float) for u in self.utilities)
        object.__setattr__(self, "utilities", utils)
        if not utils:
            raise ValidationError("a game needs at least one player")
        p = len(utils)
        n = utils[0].shape[0] if utils[0].ndim else 0
        for j, u in enumerate(utils):
            if u.shape != (n,) * p:
                raise ValidationError(f"player {j} utilities must have shape {(n,) * p}, got {u.shape}")
            if not np.all(np.isfinite(u)) or u.min() < 0 or u.max() > 1:
                raise ValidationError(f"player {j} utilities must lie in [0, 1]")

    @property
    def players(self) -> int:
        return len(self.utilities)

    @property
    def strategies(self) -> int:
        return self.utilities[0].shape[0]

    @property
    def welfare(self) -> np.ndarray:
        return np.sum(self.utilities, axis=0)

    @classmethod
    def random(cls, players: int, strategies: int, rng) -> "NormalFormGame":
        rng = np.random.default_rng(rng)
        shape = (strategies,) * players
        return cls(tuple(rng.uniform(0, 1, shape) for _ in range(players)))

    def to_dict(self) -> dict:
        return {
            "players": self.players,
            "strategies": self.strategies,
            "utilities": [u.tolist() for u in self.utilities],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "NormalFormGame":
        game = cls(tuple(doc["utilities"]))
        if "players" in doc and doc["players"] != game.players:
            raise ValidationError("'players' does not match the utility arrays")
        if "strategies" in doc and doc["strategies"] != game.strategies:
            raise ValidationError("'strategies' does not match the utility arrays")
        return game


def load_game(path) -> NormalFormGame:
    with open(path) as fh:
        return NormalFormGame.from_dict(json.load(fh))


def _contract_others(tensor: np.ndarray, j: int, mixed: Sequence[np.ndarray]) -> np.ndarray:
    """Sum ``tensor`` against every player's mixed strategy except ``j``."""
    p = tensor.ndim
    letters = string.ascii_letters[:p]
    operands, subs = [tensor], [letters]
    for i in range(p):
        if i != j:
            operands.append(mixed[i])
            subs.append(letters[i])
    return np.einsum(",".join(subs) + "->" + letters[j], *operands)


def expected_utility_vector(game: NormalFormGame, j: int, mixed: Sequence) -> np.ndarray:
    """``u_jk = E_{s_-j ~ x_-j}[u_j(k, s_-j)]`` for every strategy ``k`` of player ``j``.

    ``mixed`` holds one mixed strategy per player; entry ``j`` is ignored.
    """
    if len(mixed) != game.players:
        raise ValidationError(f"need {game.players} mixed strategies, got {len(mixed)}")
    mixed = [np.asarray(x, dtype=float) for x in mixed]
    for i, x in enumerate(mixed):
        if i != j and x.shape != (game.strategies,):
            raise ValidationError(f"mixed strategy of player {i} has shape {x.shape}")
    return _contract_others(game.utilities[j], j, mixed)


@dataclass
class EmpiricalDistribution:
    """Per-player mixed-strategy histories; ``histories[j]`` has shape (T, N)."""

    histories: list

    @property
    def T(self) -> int:
        return len(self.histories[0])

    def average(self) -> np.ndarray:
        """The time-averaged product distribution as a tensor of shape ``(N,) * P``."""
        p = len(self.histories)
        letters = string.ascii_letters[: p + 1]
        t, rest = letters[0], letters[1:]
        spec = ",".join(t + r for r in rest) + "->" + rest
        return np.einsum(spec, *self.histories) / self.T


@dataclass
class DynamicsResult:
    distribution: EmpiricalDistribution
    ledgers: list
    etas: list

    def regrets(self) -> list[float]:
        return [regret(l) for l in self.ledgers]


def run_dynamics(
    game: NormalFormGame,
    specs: Sequence[GevSpec] | GevSpec,
    T: int,
    etas: Sequence[float] | None = None,
    seed: int | None = None,
) -> DynamicsResult:
    """Simultaneous SSA play for ``T`` rounds.

    Each player uses its own spec and learning rate; by default
    ``eta_j = sqrt(L_j T / (2 phi_j(0)))`` (payoffs are bounded by 1).
    The dynamics are deterministic; ``seed`` is accepted for interface
    symmetry with the stochastic experiments and has no effect.
    """
    if T < 1:
        raise ValidationError("T must be at least 1")
    p, n = game.players, game.strategies
    if isinstance(specs, GevSpec):
        specs = [specs] * p
    if len(specs) != p or any(s.n != n for s in specs):
        raise ValidationError("need one spec per player with N alternatives")
    if etas is None:
        etas = [optimal_eta(model_constants(s), T, 1.0) for s in specs]
    thetas = [np.zeros(n) for _ in range(p)]
    hist = [np.empty((T, n)) for _ in range(p)]
    pay = [np.empty((T, n)) for _ in range(p)]
    for t in range(T):
        xs = [choice_probabilities(specs[j], thetas[j], etas[j]) for j in range(p)]
        for j in range(p):
            u = expected_utility_vector(game, j, xs)
            hist[j][t] = xs[j]
            pay[j][t] = u
            thetas[j] = thetas[j] + u
    ledgers = [RegretLedger.from_arrays(hist[j], pay[j], u_max=1.0) for j in range(p)]
    return DynamicsResult(EmpiricalDistribution(hist), ledgers, list(etas))


def _deviation_utilities(u: np.ndarray, j: int, sigma: np.ndarray) -> np.ndarray:
    """``E_{s ~ sigma}[u_j(k, s_-j)]`` for each ``k``: fix player j's action to k."""
    marg = sigma.sum(axis=j)
    moved = np.moveaxis(u, j, 0)
    return np.array([np.sum(moved[k] * marg) for k in range(u.shape[j])])


@dataclass(frozen=True)
class CCEReport:
    delta: float
    margins: np.ndarray
    payoff: np.ndarray
    deviation: np.ndarray

    @property
    def worst_margin(self) -> float:
        return float(self.margins.min())

    @property
    def ok(self) -> bool:
        return self.worst_margin >= -1e-12


def cce_check(game: NormalFormGame, sigma, delta: float) -> CCEReport:
    """Check ``E_sigma[u_j(s)] >= E_sigma[u_j(k, s_-j)] - delta`` for all ``j, k``.

    ``sigma`` is an :class:`EmpiricalDistribution` or a joint tensor.  The
    margin of each (player, deviation) pair is ``lhs - rhs + delta``; the
    check passes when every margin is nonnegative.
    """
    joint = sigma.average() if isinstance(sigma, EmpiricalDistribution) else np.asarray(sigma, float)
    if joint.shape != game.utilities[0].shape:
        raise ValidationError("distribution shape does not match the game")
    payoff = np.array([np.sum(u * joint) for u in game.utilities])
    deviation = np.array([_deviation_utilities(u, j, joint) for j, u in enumerate(game.utilities)])
    margins = payoff[:, None] - deviation + delta
    return CCEReport(delta, margins, payoff, deviation)


def brute_force_opt(game: NormalFormGame) -> tuple[float, tuple]:
    """``OPT = max_s W(s)`` by enumeration; the lowest profile wins ties."""
    if game.strategies**game.players > MAX_PROFILES:
        raise ValidationError(f"more than {MAX_PROFILES} profiles; refusing to enumerate")
    w = game.welfare
    best, arg = -math.inf, None
    for s in itertools.product(range(game.strategies), repeat=game.players):
        if w[s] > best:
            best, arg = float(w[s]), s
    return best, arg


@dataclass(frozen=True)
class SmoothnessParams:
    """Verified ``(lam, mu)``-smoothness witnessed by the profile ``s_star``."""

    lam: float
    mu: float
    s_star: tuple

    @classmethod
    def verified(cls, game: NormalFormGame, lam: float, mu: float, s_star: Sequence[int]) -> "SmoothnessParams":
        """Build after checking the smoothness inequality on every pure profile."""
        if not lam > 0 or mu < 0:
            raise ValidationError("need lam > 0 and mu >= 0")
        s_star = tuple(int(a) for a in s_star)
        opt, _ = brute_force_opt(game)
        slack = _smoothness_lhs(game, s_star) - (lam * opt - mu * game.welfare)
        if slack.min() < -1e-12:
            worst = np.unravel_index(int(np.argmin(slack)), slack.shape)
            raise ValidationError(f"game is not ({lam}, {mu})-smooth: violated at profile {tuple(map(int, worst))}")
        return cls(lam, mu, s_star)

    @classmethod
    def best_lambda(cls, game: NormalFormGame, mu: float, s_star: Sequence[int]) -> "SmoothnessParams":
        """Largest ``lam`` for which the game is ``(lam, mu)``-smooth with ``s_star``."""
        s_star = tuple(int(a) for a in s_star)
        opt, _ = brute_force_opt(game)
        lam = float(np.min(_smoothness_lhs(game, s_star) + mu * game.welfare) / opt)
        return cls.verified(game, lam, mu, s_star)

    @property
    def price_of_anarchy(self) -> float:
        return (1 + self.mu) / self.lam


def _smoothness_lhs(game: NormalFormGame, s_star: tuple) -> np.ndarray:
    """``sum_j u_j(s*_j, s_-j)`` for every profile ``s``."""
    total = np.zeros(game.utilities[0].shape)
    for j, u in enumerate(game.utilities):
        fixed = np.take(u, s_star[j], axis=j)
        total += np.expand_dims(fixed, j)
    return total


@dataclass(frozen=True)
class WelfareReport:
    average_welfare: float
    opt: float
    lower_bound: float
    price_of_anarchy: float
    regret_term: float

    @property
    def slack(self) -> float:
        return self.average_welfare - self.lower_bound

    @property
    def ok(self) -> bool:
        return self.slack >= -1e-12


def welfare_bound_check(game: NormalFormGame, smooth: SmoothnessParams, result: DynamicsResult) -> WelfareReport:
    """``(1/T) sum_t W(x^t) >= lam/(1+mu) OPT - 1/(1+mu) (1/T) sum_j R_j``."""
    dist = result.distribution
    T = dist.T
    w = game.welfare
    p = game.players
    letters = string.ascii_letters[: p + 1]
    t, rest = letters[0], letters[1:]
    per_round = np.einsum(rest + "," + ",".join(t + r for r in rest) + "->" + t, w, *dist.histories)
    avg = float(per_round.mean())
    opt, _ = brute_force_opt(game)
    regret_term = sum(result.regrets()) / T
    lower = smooth.lam / (1 + smooth.mu) * opt - regret_term / (1 + smooth.mu)
    return WelfareReport(avg, opt, lower, smooth.price_of_anarchy, regret_term)


def routing_game(a: float = 0.5) -> NormalFormGame:
    """Two players choose one of two links; a shared link is congested.

    Utility is ``1 - cost`` with cost ``a`` for a link alone and ``1`` for a
    shared link on link 0 (``a + (1 - a) / 2`` on link 1).
    """
    cost_alone = np.array([a, a])
    cost_shared = np.array([1.0, a + (1 - a) / 2])
    u1 = np.empty((2, 2))
    u2 = np.empty((2, 2))
    for s1, s2 in itertools.product(range(2), repeat=2):
        if s1 == s2:
            u1[s1, s2] = u2[s1, s2] = 1 - cost_shared[s1]
        else:
            u1[s1, s2] = 1 - cost_alone[s1]
            u2[s1, s2] = 1 - cost_alone[s2]
    return NormalFormGame((u1, u2))


def dynamics_table(result: DynamicsResult, game: NormalFormGame) -> np.ndarray:
    """Columns: t, cumulative regret per player, expected welfare at t."""
    dist = result.distribution
    T = dist.T
    curves = [regret_curve(l.X, l.U) for l in result.ledgers]
    p = game.players
    letters = string.ascii_letters[: p + 1]
    t, rest = letters[0], letters[1:]
    welfare = np.einsum(rest + "," + ",".join(t + r for r in rest) + "->" + t, game.welfare, *dist.histories)
    return np.column_stack([np.arange(1, T + 1), *curves, welfare])
