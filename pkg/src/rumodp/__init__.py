"""Online decision problems over random-utility (GEV) choice models.

The learner plays the choice probabilities of a GEV model evaluated at the
cumulative payoff vector; the same surplus function also drives
no-regret game dynamics and a cost-function market maker.
"""

from .errors import (
    AuditFailure,
    ConvergenceError,
    DegenerateModelError,
    DomainError,
    EndOfStream,
    PayoffBoundError,
    UnsupportedVariantError,
    ValidationError,
)
from .gev import (
    Attribute,
    GevSpec,
    choice_probabilities,
    model_constants,
    numeric_gradient,
    regularizer,
    social_surplus,
    table1_specs,
    two_stage_breakdown,
)
from .learners import Predictor, ftrl_solve, run_ssa, ssa_trajectory
from .regret import RegretLedger, bounds_table, optimal_eta, regret, regret_bound

__version__ = "0.1.0"
