"""Oblivious payoff streams honoring ``||u_t||_inf <= u_max``.

Streams are driven by numpy's PCG64 generator seeded from the config, so a
seed pins the stream exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, EndOfStream, ValidationError

KINDS = ("iid_uniform", "iid_gaussian_clipped", "best_arm_shift", "adversarial_alternating", "slow_drift")


@dataclass(frozen=True)
class EnvironmentConfig:
    """Stream description.

    kind
        ``iid_uniform``: i.i.d. U[-u_max, u_max] entries.
        ``iid_gaussian_clipped``: N(mean_i, sigma) clipped to [-u_max, u_max];
        means default to an even grid over [-u_max/2, u_max/2].
        ``best_arm_shift``: U[0, u_max/2] noise plus u_max/2 on a best arm
        that moves to the next alternative every ``period`` steps.
        ``adversarial_alternating``: u_max on alternative 0 at odd periods and
        on alternative 1 at even periods, zero elsewhere.
        ``slow_drift``: a random walk from ``u_0 = 0`` with steps in
        [-B, B]^N, clipped to [-u_max, u_max].
    """

    kind: str
    n: int
    T: int
    u_max: float = 1.0
    seed: int = 0
    B: float | None = None
    sigma: float | None = None
    means: tuple | None = None
    period: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown environment kind {self.kind!r}")
        if self.n < 1 or self.T < 0:
            raise ValidationError("need n >= 1 and T >= 0")
        if not self.u_max > 0:
            raise DomainError("u_max must be positive")
        if self.kind == "adversarial_alternating" and self.n < 2:
            raise ValidationError("alternating stream needs two alternatives")
        if self.kind == "slow_drift" and (self.B is None or self.B < 0):
            raise DomainError("slow_drift needs B >= 0")
        if self.means is not None and len(self.means) != self.n:
            raise ValidationError("need one mean per alternative")


class Environment:
    """Stateful stream; ``next_payoff`` raises :class:`EndOfStream` after T periods."""

    def __init__(self, config: EnvironmentConfig):
        self.config = config
        self.rng = np.random.Generator(np.random.PCG64(config.seed))
        self.t = 0
        self._last = np.zeros(config.n)

    def next_payoff(self) -> np.ndarray:
        c = self.config
        if self.t >= c.T:
            raise EndOfStream(f"horizon T={c.T} exhausted")
        self.t += 1
        u = self._draw(self.t)
        self._last = u
        return u

    def __iter__(self):
        while True:
            try:
                yield self.next_payoff()
            except EndOfStream:
                return

    def _draw(self, t: int) -> np.ndarray:
        c, rng = self.config, self.rng
        if c.kind == "iid_uniform":
            return rng.uniform(-c.u_max, c.u_max, c.n)
        if c.kind == "iid_gaussian_clipped":
            means = np.linspace(-c.u_max / 2, c.u_max / 2, c.n) if c.means is None else np.asarray(c.means, float)
            sigma = c.u_max / 2 if c.sigma is None else c.sigma
            return np.clip(rng.normal(means, sigma), -c.u_max, c.u_max)
        if c.kind == "best_arm_shift":
            period = c.period or max(c.T // 4, 1)
            u = rng.uniform(0, c.u_max / 2, c.n)
            u[((t - 1) // period) % c.n] += c.u_max / 2
            return u
        if c.kind == "adversarial_alternating":
            u = np.zeros(c.n)
            u[(t - 1) % 2] = c.u_max
            return u
        step = rng.uniform(-c.B, c.B, c.n)
        return np.clip(self._last + step, -c.u_max, c.u_max)


def next_payoff(env: Environment) -> np.ndarray:
    return env.next_payoff()


def generate(config: EnvironmentConfig) -> np.ndarray:
    """The whole stream as a (T, n) array."""
    return np.array(list(Environment(config))).reshape(config.T, config.n)
