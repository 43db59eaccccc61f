"""Generalized extreme value (GEV) choice models.

Every variant (MNL, NL, GNL, CNL, PCL, OGEV, PDGEV) is stored in the common
GNL form: K nests, a nest parameter ``lambda_k`` per nest and an N x K
allocation matrix ``alpha``.  The generator is

    G(y) = sum_k ( sum_i (alpha_ik * y_i) ** (1 / lambda_k) ) ** lambda_k

and with the zero-mean shock convention the social surplus is
``phi(theta) = eta * log G(exp(theta / eta))``.  Its gradient is the
choice-probability vector.

All evaluations are carried out in log space: theta is shifted by its max,
and inside every nest by the nest max, before anything is exponentiated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations
from typing import Sequence

import numpy as np

from .errors import DomainError, UnsupportedVariantError, ValidationError

VARIANTS = ("MNL", "NL", "GNL", "CNL", "PCL", "OGEV", "PDGEV")

LAMBDA_MIN = 1e-3
_ALPHA_TOL = 1e-9
_CHUNK = 8192


@dataclass(frozen=True)
class Attribute:
    """One PDGEV attribute: its weight, nest parameter and the nests it induces."""

    weight: float
    lam: float
    nests: tuple[tuple[int, ...], ...]


@dataclass(frozen=True, eq=False)
class GevSpec:
    """A GEV model in GNL form.

    Use the classmethod constructors (``mnl``, ``nl``, ``gnl``, ``cnl``,
    ``pcl``, ``ogev``, ``pdgev``) rather than calling this directly.
    Alternatives are indexed from 0.
    """

    variant: str
    n: int
    lambdas: np.ndarray
    alpha: np.ndarray
    width: int | None = None
    attributes: tuple[Attribute, ...] | None = None
    members: tuple[tuple[int, ...], ...] = field(init=False)

    def __post_init__(self):
        lambdas = np.asarray(self.lambdas, dtype=float).reshape(-1)
        alpha = np.asarray(self.alpha, dtype=float)
        object.__setattr__(self, "lambdas", lambdas)
        object.__setattr__(self, "alpha", alpha)
        lambdas.setflags(write=False)
        alpha.setflags(write=False)
        members = tuple(
            tuple(int(i) for i in np.flatnonzero(alpha[:, k] > 0))
            for k in range(alpha.shape[1] if alpha.ndim == 2 else 0)
        )
        object.__setattr__(self, "members", members)
        self._validate()

    def _validate(self):
        if self.variant not in VARIANTS:
            raise ValidationError(f"unknown variant {self.variant!r}")
        n, lam, alpha = self.n, self.lambdas, self.alpha
        if n < 1:
            raise ValidationError("need at least one alternative")
        if alpha.ndim != 2 or alpha.shape[0] != n or alpha.shape[1] != lam.size:
            raise ValidationError(
                f"alpha must be {n} x {lam.size}, got shape {alpha.shape}"
            )
        if lam.size == 0:
            raise ValidationError("need at least one nest")
        if not np.all(np.isfinite(lam)) or np.any(lam <= 0) or np.any(lam > 1):
            raise ValidationError(f"nest parameters must lie in (0, 1], got {lam}")
        if np.any(lam < LAMBDA_MIN):
            raise ValidationError(
                f"nest parameters below {LAMBDA_MIN} are not supported, got min {lam.min()}"
            )
        if not np.all(np.isfinite(alpha)) or np.any(alpha < 0):
            raise ValidationError("allocation weights must be finite and nonnegative")
        rows = alpha.sum(axis=1)
        bad = np.flatnonzero(np.abs(rows - 1.0) > _ALPHA_TOL)
        if bad.size:
            raise ValidationError(
                f"allocation weights of alternative {int(bad[0])} sum to {rows[bad[0]]}, not 1"
            )
        if any(len(m) == 0 for m in self.members):
            raise ValidationError("every nest needs at least one member")
        if self.variant in ("MNL", "NL"):
            if not np.all((alpha == 0) | (alpha == 1)):
                raise ValidationError(f"{self.variant} nests must partition the alternatives")
        if self.variant == "MNL" and not np.all(lam == 1):
            raise ValidationError("MNL has no nest parameter other than 1")
        if self.variant == "CNL" and not np.all(lam == lam[0]):
            raise ValidationError("CNL uses a single nest parameter for all nests")

    # -- constructors -----------------------------------------------------

    @classmethod
    def mnl(cls, n: int) -> "GevSpec":
        return cls("MNL", n, np.ones(1), np.ones((n, 1)))

    @classmethod
    def nl(cls, nests: Sequence[Sequence[int]], lambdas: Sequence[float]) -> "GevSpec":
        """Nested logit from a partition of ``range(n)`` into nests."""
        flat = [i for nest in nests for i in nest]
        n = len(flat)
        if sorted(flat) != list(range(n)):
            raise ValidationError("NL nests must partition 0..n-1 with no overlap")
        if len(lambdas) != len(nests):
            raise ValidationError("need one nest parameter per nest")
        alpha = np.zeros((n, len(nests)))
        for k, nest in enumerate(nests):
            alpha[list(nest), k] = 1.0
        return cls("NL", n, np.asarray(lambdas, float), alpha)

    @classmethod
    def gnl(cls, alpha, lambdas: Sequence[float]) -> "GevSpec":
        alpha = np.asarray(alpha, float)
        return cls("GNL", alpha.shape[0], np.asarray(lambdas, float), alpha)

    @classmethod
    def cnl(cls, alpha, lam: float) -> "GevSpec":
        alpha = np.asarray(alpha, float)
        return cls("CNL", alpha.shape[0], np.full(alpha.shape[1], float(lam)), alpha)

    @classmethod
    def pcl(cls, n: int, lam: float | Sequence[float]) -> "GevSpec":
        """Paired combinatorial logit: one nest per unordered pair ``i < j``.

        Each alternative sits in ``n - 1`` pair nests with weight
        ``1 / (n - 1)``.  Summing over ordered pairs with weight
        ``1 / (2 (n - 1))`` gives the same generator, since every unordered
        pair is counted twice at half the weight.
        """
        if n < 2:
            raise ValidationError("PCL needs at least two alternatives")
        pairs = list(combinations(range(n), 2))
        lams = np.broadcast_to(np.asarray(lam, float), (len(pairs),)).copy()
        alpha = np.zeros((n, len(pairs)))
        for k, (i, j) in enumerate(pairs):
            alpha[i, k] = alpha[j, k] = 1.0 / (n - 1)
        return cls("PCL", n, lams, alpha)

    @classmethod
    def ogev(
        cls, n: int, width: int, lambdas: float | Sequence[float], alpha=None
    ) -> "GevSpec":
        """Ordered GEV with ``n + width`` overlapping windows.

        Nest ``l`` (0-based) holds alternatives ``l - width .. l``, so every
        alternative lies in ``width + 1`` consecutive nests.  The default
        allocation is uniform, ``1 / (width + 1)``.
        """
        if width < 0:
            raise ValidationError("OGEV width must be nonnegative")
        k = n + width
        lams = np.broadcast_to(np.asarray(lambdas, float), (k,)).copy()
        if alpha is None:
            alpha = np.zeros((n, k))
            for i in range(n):
                alpha[i, i : i + width + 1] = 1.0 / (width + 1)
        else:
            alpha = np.asarray(alpha, float)
            if alpha.shape != (n, k):
                raise ValidationError(f"OGEV alpha must be {n} x {k}")
            for i in range(n):
                outside = np.ones(k, bool)
                outside[i : i + width + 1] = False
                if np.any(alpha[i, outside] != 0):
                    raise ValidationError(
                        f"OGEV alternative {i} has weight outside its window"
                    )
        return cls("OGEV", n, lams, alpha, width=width)

    @classmethod
    def pdgev(cls, n: int, attributes: Sequence[Attribute]) -> "GevSpec":
        """Principles-of-differentiation GEV.

        Each attribute partitions the alternatives into nests; the attribute
        weight becomes the allocation weight of its nests, so the weights
        must sum to one for every alternative.
        """
        attributes = tuple(
            a if isinstance(a, Attribute) else Attribute(**a) for a in attributes
        )
        cols, lams = [], []
        for a in attributes:
            for nest in a.nests:
                col = np.zeros(n)
                col[list(nest)] = a.weight
                cols.append(col)
                lams.append(a.lam)
        if not cols:
            raise ValidationError("PDGEV needs at least one attribute")
        alpha = np.column_stack(cols)
        return cls("PDGEV", n, np.asarray(lams), alpha, attributes=attributes)

    # -- derived layout ---------------------------------------------------

    @property
    def k(self) -> int:
        return self.lambdas.size

    @cached_property
    def _padded(self):
        # nests as padded index lists so batched evaluation stays O(B * K * m)
        m = max(len(mem) for mem in self.members)
        idx = np.zeros((self.k, m), dtype=np.intp)
        log_alpha = np.full((self.k, m), -np.inf)
        scatter = np.zeros((self.k * m, self.n))
        for k, mem in enumerate(self.members):
            idx[k, : len(mem)] = mem
            log_alpha[k, : len(mem)] = np.log(self.alpha[list(mem), k])
            for p, i in enumerate(mem):
                scatter[k * m + p, i] = 1.0
        return idx, log_alpha, scatter

    @property
    def min_lambda(self) -> float:
        return float(self.lambdas.min())

    def __repr__(self):
        return f"GevSpec({self.variant}, n={self.n}, K={self.k}, min_lambda={self.min_lambda:g})"


# -- core evaluation ------------------------------------------------------


def _check_eta(eta: float):
    if not (eta > 0 and math.isfinite(eta)):
        raise DomainError(f"eta must be positive and finite, got {eta}")


def _as_theta(spec: GevSpec, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape[-1] != spec.n:
        raise ValidationError(f"expected {spec.n} payoffs, got shape {theta.shape}")
    if not np.all(np.isfinite(theta)):
        raise DomainError("theta must be finite")
    return theta


def _nest_parts(spec: GevSpec, z: np.ndarray):
    """Log-space pieces of the generator at scaled utilities ``z`` (..., N).

    Returns ``(shift, log_s, v, log_g)`` where ``log_s`` (..., K) is the log
    of each nest's inner sum, ``v = lambda * log_s`` the inclusive values and
    ``log_g`` the log generator, all for ``z - shift``; also the within-nest
    probabilities (..., K, m) and nest probabilities (..., K).
    """
    idx, log_alpha, _ = spec._padded
    shift = z.max(axis=-1, keepdims=True)
    zs = z - shift
    w = (zs[..., idx] + log_alpha) / spec.lambdas[:, None]
    wmax = w.max(axis=-1, keepdims=True)
    e = np.exp(w - wmax)
    s = e.sum(axis=-1)
    log_s = wmax[..., 0] + np.log(s)
    within = e / s[..., None]
    v = spec.lambdas * log_s
    vmax = v.max(axis=-1, keepdims=True)
    ev = np.exp(v - vmax)
    sv = ev.sum(axis=-1)
    log_g = vmax[..., 0] + np.log(sv)
    nest_p = ev / sv[..., None]
    return shift[..., 0], log_s, v, log_g, within, nest_p


def _chunked(fn, z: np.ndarray):
    if z.ndim < 2 or z.shape[0] <= _CHUNK:
        return fn(z)
    return np.concatenate([fn(z[i : i + _CHUNK]) for i in range(0, z.shape[0], _CHUNK)])


def log_generator(spec: GevSpec, log_y) -> np.ndarray:
    """``log G(exp(log_y))``, vectorized over leading axes."""
    z = _as_theta(spec, log_y)

    def f(zz):
        shift, _, _, log_g, _, _ = _nest_parts(spec, zz)
        return shift + log_g

    return _chunked(f, z)


def generator_value(spec: GevSpec, y) -> float | np.ndarray:
    """Evaluate the generator ``G(y)`` for strictly positive ``y``."""
    y = np.asarray(y, dtype=float)
    if np.any(~(y > 0)) or not np.all(np.isfinite(y)):
        raise DomainError("generator arguments must be positive and finite")
    out = np.exp(log_generator(spec, np.log(y)))
    return float(out) if out.ndim == 0 else out


def social_surplus(spec: GevSpec, theta, eta: float) -> float | np.ndarray:
    """``eta * log G(exp(theta / eta))``; Euler's constant is not added.

    Accepts a single payoff vector or a batch with shape (B, N).
    """
    _check_eta(eta)
    theta = _as_theta(spec, theta)
    out = eta * log_generator(spec, theta / eta)
    return float(out) if out.ndim == 0 else out


def choice_probabilities(spec: GevSpec, theta, eta: float) -> np.ndarray:
    """Gradient of the social surplus, i.e. the GEV choice probabilities.

    Computed as ``sum_k P(nest k) * P(i | nest k)``.  Works for a single
    vector or a batch (B, N); rows sum to one.
    """
    _check_eta(eta)
    theta = _as_theta(spec, theta)
    _, _, scatter = spec._padded

    def f(z):
        _, _, _, _, within, nest_p = _nest_parts(spec, z)
        contrib = (nest_p[..., None] * within).reshape(*z.shape[:-1], -1)
        x = contrib @ scatter
        return x / x.sum(axis=-1, keepdims=True)

    return _chunked(f, theta / eta)


@dataclass(frozen=True)
class TwoStageBreakdown:
    """Nest choice, within-nest choice and inclusive values.

    ``inclusive_values`` are in utility units: ``eta * v_k`` with ``v_k`` the
    inclusive value of the scaled utilities, so that
    ``phi = eta * log(sum_k exp(inclusive_values / eta))``.
    """

    nest_probs: np.ndarray
    within_probs: np.ndarray
    inclusive_values: np.ndarray

    def recompose(self) -> np.ndarray:
        return self.nest_probs @ self.within_probs


def two_stage_breakdown(spec: GevSpec, theta, eta: float) -> TwoStageBreakdown:
    if spec.variant == "MNL":
        raise UnsupportedVariantError("MNL has no nesting structure to break down")
    _check_eta(eta)
    theta = _as_theta(spec, theta)
    if theta.ndim != 1:
        raise ValidationError("two_stage_breakdown takes a single payoff vector")
    shift, _, v, _, within, nest_p = _nest_parts(spec, theta / eta)
    idx, _, _ = spec._padded
    dense = np.zeros((spec.k, spec.n))
    for k, mem in enumerate(spec.members):
        dense[k, list(mem)] = within[k, : len(mem)]
    return TwoStageBreakdown(nest_p, dense, eta * (v + shift))


# -- model constants ------------------------------------------------------


@dataclass(frozen=True)
class ModelConstants:
    """Constants entering the regret bounds.

    ``L = 2M + 1`` is the Lipschitz numerator (the gradient is ``L / eta``
    Lipschitz in l1).  ``surplus_at_zero`` is the exact ``log G(1)`` and
    ``log_n`` the ``log N`` upper bound used by the closed-form table.
    """

    name: str
    n: int
    M: float
    L: float
    surplus_at_zero: float
    log_n: float


def model_constants(spec: GevSpec) -> ModelConstants:
    if spec.variant == "MNL":
        m = 0.0
    else:
        m = 1.0 / spec.min_lambda - 1.0
    phi0 = float(log_generator(spec, np.zeros(spec.n)))
    return ModelConstants(spec.variant, spec.n, m, 2.0 * m + 1.0, phi0, math.log(spec.n))


# -- regularizer ----------------------------------------------------------


def _as_interior(x, n: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != n:
        raise ValidationError(f"expected {n} probabilities, got shape {x.shape}")
    if np.any(~(x > 0)):
        raise DomainError("x must be strictly inside the simplex")
    return x


def regularizer(spec: GevSpec, x, eta: float) -> float:
    """Convex conjugate of the surplus on the simplex (MNL and NL only).

    MNL gives ``eta * sum x log x``.  NL gives the two-level entropy
    ``eta * sum_k [lambda_k sum_{i in k} x_i log x_i
    + (1 - lambda_k) S_k log S_k]`` with ``S_k`` the nest mass.
    """
    if spec.variant not in ("MNL", "NL"):
        raise UnsupportedVariantError(f"no closed-form regularizer for {spec.variant}")
    _check_eta(eta)
    x = _as_interior(x, spec.n)
    if spec.variant == "MNL":
        return float(eta * np.sum(x * np.log(x)))
    total = 0.0
    for lam, mem in zip(spec.lambdas, spec.members):
        xs = x[list(mem)]
        s = xs.sum()
        total += lam * np.sum(xs * np.log(xs)) + (1.0 - lam) * s * math.log(s)
    return float(eta * total)


def regularizer_gradient(spec: GevSpec, x, eta: float) -> np.ndarray:
    """Gradient of :func:`regularizer` at an interior point."""
    if spec.variant not in ("MNL", "NL"):
        raise UnsupportedVariantError(f"no closed-form regularizer for {spec.variant}")
    x = _as_interior(x, spec.n)
    g = np.empty(spec.n)
    for lam, mem in zip(spec.lambdas, spec.members):
        mem = list(mem)
        s = x[mem].sum()
        g[mem] = lam * (np.log(x[mem]) + 1.0) + (1.0 - lam) * (math.log(s) + 1.0)
    return eta * g


# -- test oracles ---------------------------------------------------------


def numeric_gradient(spec: GevSpec, theta, eta: float, h: float | None = None) -> np.ndarray:
    """Central-difference gradient of :func:`social_surplus`.

    The step defaults to ``1e-5 * eta * min_lambda`` clipped to [1e-7, 1e-4],
    which keeps truncation error small when ``1 / (eta * lambda)`` is large.
    ``theta`` may be a batch (B, N).
    """
    _check_eta(eta)
    theta = _as_theta(spec, theta)
    if h is None:
        h = min(max(1e-5 * eta * spec.min_lambda, 1e-7), 1e-4)
    elif not 1e-7 <= h <= 1e-4:
        raise DomainError(f"finite-difference step must lie in [1e-7, 1e-4], got {h}")
    # surplus is translation-equivariant, so center first to cut round-off
    centered = theta - theta.max(axis=-1, keepdims=True)
    steps = h * np.eye(spec.n)
    plus = centered[..., None, :] + steps
    minus = centered[..., None, :] - steps
    fp = social_surplus(spec, plus.reshape(-1, spec.n), eta)
    fm = social_surplus(spec, minus.reshape(-1, spec.n), eta)
    return ((np.asarray(fp) - np.asarray(fm)) / (2 * h)).reshape(theta.shape)


def ftpl_sample_choice(spec: GevSpec, theta, eta: float, rng=None, size: int | None = None):
    """Follow-the-perturbed-leader draw: ``argmax_j theta_j + eta * eps_j``.

    ``eps`` are i.i.d. Gumbel shocks shifted to mean zero.  Only MNL has
    independent shocks, so other variants are rejected.  Exact ties go to
    the lowest index.  ``rng`` is a seed or a ``numpy.random.Generator``.
    """
    if spec.variant != "MNL":
        raise UnsupportedVariantError("FTPL sampling is implemented for MNL only")
    _check_eta(eta)
    theta = _as_theta(spec, theta)
    rng = np.random.default_rng(rng)
    shape = (spec.n,) if size is None else (size, spec.n)
    eps = rng.gumbel(size=shape) - np.euler_gamma
    pick = np.argmax(theta + eta * eps, axis=-1)
    return int(pick) if size is None else pick


# -- stock specs ----------------------------------------------------------


def table1_specs(n: int = 10) -> dict[str, GevSpec]:
    """One fixed, deterministic spec per variant, used by experiments."""
    half = n // 2
    nl = GevSpec.nl([list(range(half)), list(range(half, n))], [0.5, 0.8])
    alpha = np.zeros((n, 3))
    for i in range(n):
        alpha[i, i % 3] = 0.6
        alpha[i, (i + 1) % 3] = 0.4
    gnl = GevSpec.gnl(alpha, [0.5, 0.7, 0.9])
    calpha = np.zeros((n, 2))
    calpha[:, 0] = np.linspace(0.2, 0.8, n)
    calpha[:, 1] = 1 - calpha[:, 0]
    cnl = GevSpec.cnl(calpha, 0.5)
    pcl = GevSpec.pcl(n, 0.5)
    ogev = GevSpec.ogev(n, 1, 0.6)
    pdgev = GevSpec.pdgev(
        n,
        [
            Attribute(0.5, 0.5, (tuple(range(half)), tuple(range(half, n)))),
            Attribute(0.5, 0.7, (tuple(range(0, n, 2)), tuple(range(1, n, 2)))),
        ],
    )
    return {
        "MNL": GevSpec.mnl(n),
        "NL": nl,
        "GNL": gnl,
        "CNL": cnl,
        "PCL": pcl,
        "OGEV": ogev,
        "PDGEV": pdgev,
    }


def random_spec(variant: str, n: int, rng, lam_low: float = 0.2) -> GevSpec:
    """A random valid spec of the given variant (test and experiment helper)."""
    rng = np.random.default_rng(rng)
    if variant == "MNL":
        return GevSpec.mnl(n)
    if variant == "NL":
        k = int(rng.integers(1, n + 1))
        labels = np.concatenate([np.arange(k), rng.integers(0, k, n - k)])
        rng.shuffle(labels)
        nests = [list(np.flatnonzero(labels == j)) for j in range(k)]
        return GevSpec.nl(nests, rng.uniform(lam_low, 1, k))
    if variant in ("GNL", "CNL"):
        k = int(rng.integers(1, n + 1))
        raw = rng.uniform(0, 1, (n, k)) * (rng.uniform(size=(n, k)) < 0.6)
        raw[np.arange(n), rng.integers(0, k, n)] += 0.1
        empty = raw.sum(axis=0) == 0
        raw[0, empty] = 0.1
        alpha = raw / raw.sum(axis=1, keepdims=True)
        if variant == "GNL":
            return GevSpec.gnl(alpha, rng.uniform(lam_low, 1, k))
        return GevSpec.cnl(alpha, float(rng.uniform(lam_low, 1)))
    if variant == "PCL":
        return GevSpec.pcl(max(n, 2), rng.uniform(lam_low, 1, max(n, 2) * (max(n, 2) - 1) // 2))
    if variant == "OGEV":
        width = int(rng.integers(0, min(n, 3)))
        return GevSpec.ogev(n, width, rng.uniform(lam_low, 1, n + width))
    if variant == "PDGEV":
        n_attr = int(rng.integers(1, 4))
        weights = rng.dirichlet(np.ones(n_attr))
        attrs = []
        for d in range(n_attr):
            k = int(rng.integers(1, n + 1))
            labels = np.concatenate([np.arange(k), rng.integers(0, k, n - k)])
            rng.shuffle(labels)
            nests = tuple(tuple(int(i) for i in np.flatnonzero(labels == j)) for j in range(k))
            attrs.append(Attribute(float(weights[d]), float(rng.uniform(lam_low, 1)), nests))
        return GevSpec.pdgev(n, attrs)
    raise ValidationError(f"unknown variant {variant!r}")
