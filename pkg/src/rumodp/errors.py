"""Exception types shared across the package."""

from __future__ import annotations


class ValidationError(ValueError):
    """A model spec, config, or game description failed validation."""


class DomainError(ValueError):
    """An argument lies outside the domain of the operation (e.g. eta <= 0)."""


class UnsupportedVariantError(ValueError):
    """The operation has no closed form for the given GEV variant."""


class DegenerateModelError(ValueError):
    """The model makes a formula undefined, e.g. log G(1) = 0 when N = 1."""


class PayoffBoundError(ValueError):
    """A payoff vector violates the configured sup-norm bound."""


class EndOfStream(Exception):
    """Raised by an environment once its horizon is exhausted."""


class ConvergenceError(RuntimeError):
    """An iterative solver hit its iteration cap.

    The best iterate and its optimality residual are kept so callers can
    decide whether the partial answer is usable.
    """

    def __init__(self, message: str, best, residual: float):
        super().__init__(message)
        self.best = best
        self.residual = residual


class AuditFailure(AssertionError):
    """A numerical audit found a violated property; carries the witness."""

    def __init__(self, prop: str, witness, detail: str = ""):
        msg = f"property {prop!r} violated at {witness!r}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
        self.prop = prop
        self.witness = witness
