import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_specs
from oracles import naive_probabilities, naive_surplus, softmax
from rumodp.errors import DomainError, UnsupportedVariantError, ValidationError
from rumodp.gev import (
    VARIANTS,
    Attribute,
    GevSpec,
    choice_probabilities,
    ftpl_sample_choice,
    generator_value,
    log_generator,
    model_constants,
    numeric_gradient,
    random_spec,
    regularizer,
    regularizer_gradient,
    social_surplus,
    table1_specs,
    two_stage_breakdown,
)

NL3 = GevSpec.nl([[0, 1], [2]], [0.5, 1.0])
SQRT2 = math.sqrt(2)


def spec_strategy(n_max=7):
    return st.builds(
        lambda v, n, seed: random_spec(v, n, np.random.default_rng(seed)),
        st.sampled_from(VARIANTS),
        st.integers(2, n_max),
        st.integers(0, 2**32 - 1),
    )


def theta_for(spec, seed, scale=50.0):
    return np.random.default_rng(seed).uniform(-scale, scale, spec.n)


# -- construction ---------------------------------------------------------


def test_nl_requires_partition():
    with pytest.raises(ValidationError):
        GevSpec.nl([[0, 1], [1, 2]], [0.5, 0.5])


@pytest.mark.parametrize("lam", [0.0, -0.1, 1.5, 5e-4, float("nan")])
def test_bad_lambda_rejected(lam):
    with pytest.raises(ValidationError):
        GevSpec.nl([[0, 1], [2]], [lam, 1.0])


def test_alpha_rows_must_sum_to_one():
    with pytest.raises(ValidationError):
        GevSpec.gnl([[0.5, 0.4], [0.0, 1.0]], [0.5, 0.5])


def test_cnl_single_lambda_and_pcl_layout():
    spec = GevSpec.pcl(4, 0.5)
    assert spec.k == 6
    assert np.allclose(spec.alpha.sum(axis=1), 1)
    assert np.allclose(spec.alpha[spec.alpha > 0], 1 / 3)


def test_ogev_windows():
    spec = GevSpec.ogev(4, 1, 0.6)
    assert spec.k == 5
    assert spec.members[0] == (0,) and spec.members[1] == (0, 1) and spec.members[4] == (3,)
    with pytest.raises(ValidationError):
        GevSpec.ogev(3, 1, 0.5, alpha=[[0.5, 0.0, 0.5, 0.0]] * 3)


def test_pdgev_weights_are_allocations():
    spec = GevSpec.pdgev(4, [Attribute(0.3, 0.5, ((0, 1), (2, 3))), Attribute(0.7, 0.8, ((0, 2), (1, 3)))])
    assert spec.k == 4
    assert np.allclose(spec.alpha.sum(axis=1), 1)
    with pytest.raises(ValidationError):
        GevSpec.pdgev(4, [Attribute(0.3, 0.5, ((0, 1), (2, 3)))])


def test_spec_is_immutable():
    with pytest.raises(ValueError):
        NL3.lambdas[0] = 0.9


# -- generator and surplus examples ---------------------------------------


def test_generator_examples():
    assert generator_value(GevSpec.mnl(3), np.ones(3)) == pytest.approx(3.0, abs=1e-12)
    assert generator_value(NL3, np.ones(3)) == pytest.approx(SQRT2 + 1, abs=1e-12)


def test_surplus_examples():
    assert social_surplus(GevSpec.mnl(10), np.zeros(10), 1.0) == pytest.approx(math.log(10), abs=1e-12)
    assert social_surplus(NL3, np.zeros(3), 1.0) == pytest.approx(math.log(SQRT2 + 1), abs=1e-12)
    assert math.log(SQRT2 + 1) == pytest.approx(0.881374, abs=1e-6)


def test_probability_examples():
    assert np.allclose(choice_probabilities(GevSpec.mnl(3), np.zeros(3), 1.0), 1 / 3, atol=1e-15)
    x = choice_probabilities(GevSpec.mnl(2), [math.log(2), 0.0], 1.0)
    assert np.allclose(x, [2 / 3, 1 / 3], atol=1e-15)
    x = choice_probabilities(NL3, np.zeros(3), 1.0)
    expected = [SQRT2 / 2 / (SQRT2 + 1), SQRT2 / 2 / (SQRT2 + 1), 1 / (SQRT2 + 1)]
    assert np.allclose(x, expected, atol=1e-14)
    assert np.allclose(x, [0.292893, 0.292893, 0.414214], atol=1e-6)


def test_two_stage_examples():
    b = two_stage_breakdown(NL3, np.zeros(3), 1.0)
    assert np.allclose(b.nest_probs, [SQRT2 / (SQRT2 + 1), 1 / (SQRT2 + 1)], atol=1e-14)
    assert np.allclose(b.recompose(), choice_probabilities(NL3, np.zeros(3), 1.0), atol=1e-14)
    one = GevSpec.nl([[0, 1, 2]], [1.0])
    theta = np.array([0.3, -1.0, 2.0])
    b = two_stage_breakdown(one, theta, 1.0)
    assert b.nest_probs == pytest.approx([1.0])
    assert np.allclose(b.within_probs[0], softmax(theta), atol=1e-14)
    twin = GevSpec.gnl([[0.5, 0.5], [0.5, 0.5]], [1.0, 1.0])
    b = two_stage_breakdown(twin, np.zeros(2), 1.0)
    assert np.allclose(b.nest_probs, 0.5)
    with pytest.raises(UnsupportedVariantError):
        two_stage_breakdown(GevSpec.mnl(3), np.zeros(3), 1.0)


def test_inclusive_values_rebuild_surplus():
    theta = np.array([1.0, -0.5, 2.0])
    b = two_stage_breakdown(NL3, theta, 0.7)
    assert 0.7 * np.log(np.sum(np.exp(b.inclusive_values / 0.7))) == pytest.approx(social_surplus(NL3, theta, 0.7), abs=1e-12)


def test_model_constants_examples():
    mc = model_constants(GevSpec.mnl(5))
    assert mc.L == 1 and mc.surplus_at_zero == pytest.approx(math.log(5), abs=1e-14)
    assert model_constants(NL3).L == pytest.approx(3.0)
    assert model_constants(GevSpec.cnl([[0.3, 0.7], [1.0, 0.0]], 0.25)).L == pytest.approx(7.0)


def test_regularizer_examples():
    mnl = GevSpec.mnl(4)
    assert regularizer(mnl, np.full(4, 0.25), 1.0) == pytest.approx(-math.log(4), abs=1e-14)
    x = np.array([0.2, 0.5, 0.3])
    flat = GevSpec.nl([[0, 1], [2]], [1.0, 1.0])
    assert regularizer(flat, x, 1.3) == pytest.approx(regularizer(GevSpec.mnl(3), x, 1.3), abs=1e-14)
    x = choice_probabilities(NL3, np.zeros(3), 1.0)
    assert regularizer(NL3, x, 1.0) == pytest.approx(-math.log(SQRT2 + 1), abs=1e-12)
    with pytest.raises(UnsupportedVariantError):
        regularizer(GevSpec.pcl(3, 0.5), np.full(3, 1 / 3), 1.0)
    with pytest.raises(DomainError):
        regularizer(mnl, [0.5, 0.5, 0.0, 0.0], 1.0)


def test_regularizer_gradient_matches_differences():
    x = np.array([0.1, 0.25, 0.4, 0.25])
    spec = GevSpec.nl([[0, 1], [2, 3]], [0.4, 0.7])
    g = regularizer_gradient(spec, x, 0.8)
    h = 1e-6
    fd = [(regularizer(spec, x + h * e, 0.8) - regularizer(spec, x - h * e, 0.8)) / (2 * h) for e in np.eye(4)]
    assert np.allclose(g, fd, atol=1e-7)


def test_numeric_gradient_examples():
    mnl = GevSpec.mnl(3)
    theta = np.array([1.0, 0.0, -1.0])
    assert np.allclose(numeric_gradient(mnl, theta, 1.0), choice_probabilities(mnl, theta, 1.0), atol=1e-6)
    assert np.allclose(numeric_gradient(NL3, np.zeros(3), 1.0), choice_probabilities(NL3, np.zeros(3), 1.0), atol=1e-6)
    with pytest.raises(DomainError):
        numeric_gradient(mnl, theta, 1.0, h=1e-2)


def test_eta_must_be_positive():
    with pytest.raises(DomainError):
        social_surplus(NL3, np.zeros(3), 0.0)
    with pytest.raises(DomainError):
        choice_probabilities(NL3, np.zeros(3), -1.0)


def test_overflow_safe_for_small_lambda():
    spec = GevSpec.nl([[0, 1], [2]], [0.05, 1.0])
    theta = np.array([300.0, 299.0, -50.0])
    x = choice_probabilities(spec, theta, 0.5)
    assert np.all(np.isfinite(x)) and x.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.isfinite(social_surplus(spec, theta, 0.5))


def test_batched_matches_rowwise(stock_specs, rng):
    for spec in stock_specs.values():
        theta = rng.uniform(-5, 5, (7, spec.n))
        batch = choice_probabilities(spec, theta, 0.9)
        rows = np.array([choice_probabilities(spec, t, 0.9) for t in theta])
        assert np.array_equal(batch, rows) or np.allclose(batch, rows, atol=1e-15)
        assert np.allclose(social_surplus(spec, theta, 0.9), [social_surplus(spec, t, 0.9) for t in theta], atol=1e-13)


# -- independent oracle ---------------------------------------------------


@given(spec_strategy(), st.integers(0, 2**32 - 1), st.sampled_from([0.5, 1.0, 3.0]))
def test_matches_naive_oracle(spec, seed, eta):
    theta = theta_for(spec, seed, scale=2.0)
    assert social_surplus(spec, theta, eta) == pytest.approx(naive_surplus(spec, theta, eta), abs=1e-10)
    assert np.allclose(choice_probabilities(spec, theta, eta), naive_probabilities(spec, theta, eta), atol=1e-10)


def test_stock_specs_match_naive_oracle(stock_specs, rng):
    for spec in stock_specs.values():
        for _ in range(5):
            theta = rng.uniform(-2, 2, spec.n)
            assert np.allclose(choice_probabilities(spec, theta, 1.0), naive_probabilities(spec, theta, 1.0), atol=1e-12)


# -- invariants -----------------------------------------------------------


def test_normalization_1000_samples():
    specs = random_specs(1, 28) + list(table1_specs().values())
    rng = np.random.default_rng(2)
    for spec in specs:
        for eta in (0.1, 1.0, 10.0):
            theta = rng.uniform(-50, 50, (1000, spec.n))
            x = choice_probabilities(spec, theta, eta)
            assert x.min() >= 0
            assert np.max(np.abs(x.sum(axis=1) - 1)) <= 1e-10


@given(spec_strategy(), st.integers(0, 2**32 - 1), st.sampled_from([0.1, 1.0, 10.0]))
def test_gradient_identity(spec, seed, eta):
    theta = theta_for(spec, seed, scale=10 * eta)
    assert np.max(np.abs(choice_probabilities(spec, theta, eta) - numeric_gradient(spec, theta, eta))) <= 1e-6


@given(spec_strategy(), st.integers(0, 2**32 - 1), st.floats(-100, 100))
def test_shift_invariance(spec, seed, c):
    theta = theta_for(spec, seed)
    assert np.allclose(choice_probabilities(spec, theta + c, 1.0), choice_probabilities(spec, theta, 1.0), atol=1e-10)
    assert social_surplus(spec, theta + c, 1.0) - social_surplus(spec, theta, 1.0) == pytest.approx(c, abs=1e-10)


def test_shift_by_five():
    for spec in table1_specs().values():
        theta = np.linspace(-1, 2, spec.n)
        assert social_surplus(spec, theta + 5, 0.7) - social_surplus(spec, theta, 0.7) == pytest.approx(5.0, abs=1e-10)


@given(spec_strategy(), st.integers(0, 2**32 - 1), st.floats(0.05, 20))
def test_positive_homogeneity(spec, seed, eta):
    theta = theta_for(spec, seed, scale=5.0)
    lhs = social_surplus(spec, theta, eta)
    rhs = eta * social_surplus(spec, theta / eta, 1.0)
    assert lhs == pytest.approx(rhs, abs=1e-10 * max(1.0, abs(lhs)))


@given(spec_strategy(), st.integers(0, 2**32 - 1))
def test_generator_homogeneity(spec, seed):
    y = np.random.default_rng(seed).uniform(0.1, 3, spec.n)
    assert generator_value(spec, 2.5 * y) == pytest.approx(2.5 * generator_value(spec, y), rel=1e-12)


@given(spec_strategy(), st.integers(0, 2**32 - 1), st.sampled_from([0.3, 1.0, 4.0]))
def test_lipschitz_gradient(spec, seed, eta):
    rng = np.random.default_rng(seed)
    L = model_constants(spec).L
    theta = rng.uniform(-3, 3, spec.n) * eta
    other = theta + rng.normal(0, rng.choice([0.01, 0.3, 3.0]) * eta, spec.n)
    gap = np.abs(choice_probabilities(spec, theta, eta) - choice_probabilities(spec, other, eta)).sum()
    assert gap <= L / eta * np.abs(theta - other).sum() + 1e-12


@given(spec_strategy(), st.integers(0, 2**32 - 1), st.floats(1e-3, 1.0))
def test_monotone_own_effect(spec, seed, eps):
    rng = np.random.default_rng(seed)
    theta = rng.uniform(-2, 2, spec.n)
    i = int(rng.integers(spec.n))
    bumped = theta.copy()
    bumped[i] += eps
    x0 = choice_probabilities(spec, theta, 1.0)
    x1 = choice_probabilities(spec, bumped, 1.0)
    assert x1[i] > x0[i]
    others = np.delete(np.arange(spec.n), i)
    assert np.all(x1[others] <= x0[others] + 1e-15)


@pytest.mark.parametrize("seed", range(10))
def test_degenerate_nesting_is_mnl(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 9))
    theta = rng.uniform(-20, 20, n)
    flat_nl = random_spec("NL", n, rng)
    flat_nl = GevSpec.nl([list(m) for m in flat_nl.members], np.ones(flat_nl.k))
    flat_gnl = random_spec("GNL", n, rng)
    flat_gnl = GevSpec.gnl(flat_gnl.alpha, np.ones(flat_gnl.k))
    mnl = GevSpec.mnl(n)
    for spec in (flat_nl, flat_gnl):
        assert np.max(np.abs(choice_probabilities(spec, theta, 1.3) - choice_probabilities(mnl, theta, 1.3))) <= 1e-12
        assert social_surplus(spec, theta, 1.3) == pytest.approx(social_surplus(mnl, theta, 1.3), abs=1e-12)


@given(st.sampled_from(["MNL", "NL"]), st.integers(2, 8), st.integers(0, 2**32 - 1), st.sampled_from([0.5, 1.0, 2.0]))
def test_fenchel_equality(variant, n, seed, eta):
    rng = np.random.default_rng(seed)
    spec = random_spec(variant, n, rng)
    theta = rng.uniform(-3, 3, n)
    x = choice_probabilities(spec, theta, eta)
    assert regularizer(spec, x, eta) == pytest.approx(theta @ x - social_surplus(spec, theta, eta), abs=1e-8)


@given(st.sampled_from(["MNL", "NL"]), st.integers(2, 8), st.integers(0, 2**32 - 1))
def test_regularizer_nonpositive(variant, n, seed):
    rng = np.random.default_rng(seed)
    spec = random_spec(variant, n, rng)
    x = rng.dirichlet(np.full(n, rng.choice([0.2, 1.0, 5.0])))
    x = np.maximum(x, 1e-300)
    x /= x.sum()
    assert regularizer(spec, x, 1.0) <= 1e-15


@given(st.integers(2, 10), st.integers(0, 2**32 - 1), st.floats(0.1, 10))
def test_mnl_weighted_average_identity(n, seed, eta):
    spec = GevSpec.mnl(n)
    theta = np.random.default_rng(seed).uniform(-5, 5, n) * eta
    x = choice_probabilities(spec, theta, eta)
    assert social_surplus(spec, theta, eta) == pytest.approx(np.sum(x * (theta - eta * np.log(x))), abs=1e-8)


def test_gnl_surplus_at_zero_below_log_n():
    rng = np.random.default_rng(7)
    for _ in range(100):
        spec = random_spec("GNL", int(rng.integers(2, 12)), rng)
        assert log_generator(spec, np.zeros(spec.n)) <= math.log(spec.n) + 1e-12


# -- FTPL -----------------------------------------------------------------


def test_ftpl_examples():
    spec = GevSpec.mnl(3)
    picks = ftpl_sample_choice(spec, [1e6, 0, 0], 1.0, rng=0, size=1000)
    assert np.all(picks == 0)
    picks = ftpl_sample_choice(GevSpec.mnl(2), [0, 0], 1.0, rng=1, size=100_000)
    assert abs(np.mean(picks == 0) - 0.5) <= 0.01
    picks = ftpl_sample_choice(GevSpec.mnl(2), [math.log(2), 0], 1.0, rng=2, size=1_000_000)
    assert abs(np.mean(picks == 0) - 2 / 3) <= 0.005
    assert isinstance(ftpl_sample_choice(spec, np.zeros(3), 1.0, rng=3), int)
    with pytest.raises(UnsupportedVariantError):
        ftpl_sample_choice(NL3, np.zeros(3), 1.0)


def test_ftpl_seeded_is_reproducible():
    spec = GevSpec.mnl(4)
    a = ftpl_sample_choice(spec, [0.1, 0.2, 0.3, 0.4], 0.5, rng=9, size=50)
    b = ftpl_sample_choice(spec, [0.1, 0.2, 0.3, 0.4], 0.5, rng=9, size=50)
    assert np.array_equal(a, b)
