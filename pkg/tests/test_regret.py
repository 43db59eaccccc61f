import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import replay_regret
from rumodp.environments import EnvironmentConfig, generate
from rumodp.errors import DegenerateModelError, DomainError, PayoffBoundError, ValidationError
from rumodp.gev import GevSpec, model_constants, random_spec, table1_specs
from rumodp.learners import run_ssa, ssa_trajectory
from rumodp.regret import (
    RegretLedger,
    best_in_hindsight,
    bound_curve,
    bounds_table,
    bregman_gap,
    format_table,
    hannan_fit,
    measured_drift,
    oftrl_bound,
    oftrl_master_bound,
    optimal_eta,
    regret,
    regret_bound,
    regret_curve,
)

LN10 = math.log(10)


def test_regret_examples():
    led = RegretLedger(2)
    led.record([0.5, 0.5], [1.0, 0.0])
    assert regret(led) == pytest.approx(0.5)
    led.record([0.5, 0.5], [0.0, 1.0])
    assert regret(led) == pytest.approx(0.0)
    with pytest.raises(ValidationError):
        regret(RegretLedger(2))


def test_regret_against_replay_oracle():
    spec = GevSpec.mnl(2)
    U = np.tile([1.0, 0.0], (100, 1))
    X = run_ssa(spec, 1.0, U)
    led = RegretLedger.from_arrays(X, U)
    assert regret(led) == pytest.approx(np.sum(1 - X[:, 0]), abs=1e-12)
    assert regret(led) == pytest.approx(replay_regret(X.tolist(), U.tolist()), abs=1e-10)


@given(st.integers(0, 2**32 - 1))
def test_regret_curve_matches_prefix_regret(seed):
    rng = np.random.default_rng(seed)
    U = rng.uniform(-1, 1, (20, 3))
    X = rng.dirichlet(np.ones(3), 20)
    curve = regret_curve(X, U)
    for t in (1, 7, 20):
        assert curve[t - 1] == pytest.approx(replay_regret(X[:t].tolist(), U[:t].tolist()), abs=1e-12)


def test_ledger_bounds_and_ties():
    led = RegretLedger(2, u_max=1.0)
    with pytest.raises(PayoffBoundError):
        led.record([0.5, 0.5], [2.0, 0.0])
    led.record([0.5, 0.5], [1.0, 1.0])
    assert best_in_hindsight(led) == 0


def test_optimal_eta_examples():
    assert optimal_eta(GevSpec.mnl(10), 10_000, 1.0) == pytest.approx(math.sqrt(1e4 / (2 * LN10)), rel=1e-12)
    assert optimal_eta(GevSpec.mnl(10), 10_000, 1.0) == pytest.approx(46.60, abs=0.005)
    assert optimal_eta(GevSpec.mnl(2), 2, 1.0) == pytest.approx(1 / math.sqrt(math.log(2)), rel=1e-12)
    assert optimal_eta(GevSpec.mnl(2), 2, 1.0) == pytest.approx(1.2011, abs=1e-4)
    e1 = optimal_eta(GevSpec.mnl(5), 100, 1.0)
    assert optimal_eta(GevSpec.mnl(5), 100, 2.0) == pytest.approx(2 * e1)
    with pytest.raises(DegenerateModelError):
        optimal_eta(GevSpec.mnl(1), 100, 1.0)
    with pytest.raises(DomainError):
        optimal_eta(GevSpec.mnl(3), 0, 1.0)


def test_regret_bound_examples():
    assert regret_bound(GevSpec.mnl(10), 10_000, 1.0).bound == pytest.approx(214.6, abs=0.05)
    gnl = table1_specs()["GNL"]
    rep = regret_bound(gnl, 10_000, 1.0, use_log_n=True)
    assert rep.bound == pytest.approx(math.sqrt(2 * LN10 * 3 * 1e4), rel=1e-12)
    assert rep.bound == pytest.approx(371.7, abs=0.05)


@given(st.sampled_from(list(table1_specs().values())), st.integers(1, 10**6), st.floats(0.1, 10))
def test_two_term_bound_at_optimal_eta(spec, T, u_max):
    opt = regret_bound(spec, T, u_max)
    two = regret_bound(spec, T, u_max, eta=opt.eta)
    assert two.bound == pytest.approx(opt.bound, rel=1e-12)
    assert regret_bound(spec, T, u_max, eta=opt.eta * 1.3).bound >= opt.bound


def test_oftrl_bound_examples():
    mnl = GevSpec.mnl(10)
    assert oftrl_bound(mnl, 10_000, 0.1).bound == pytest.approx(0.1 * math.sqrt(2e4 * LN10), rel=1e-12)
    assert oftrl_bound(mnl, 10_000, 0.1).bound == pytest.approx(21.46, abs=0.005)
    one = oftrl_bound(mnl, 500, 0.2).bound
    assert oftrl_bound(mnl, 500, 0.2, "s_step", S=1).bound == pytest.approx(one)
    assert oftrl_bound(mnl, 500, 0.2, "geometric", delta=1e-9).bound == pytest.approx(one, rel=1e-8)
    assert oftrl_bound(mnl, 500, 0.2, "s_step", S=3).bound == pytest.approx(3 * one)
    with pytest.raises(DomainError):
        oftrl_bound(mnl, 500, 0.2, "geometric", delta=1.0)


def test_bound_curve_and_master_bound():
    spec = GevSpec.mnl(4)
    c = bound_curve(spec, [1, 10, 100], 1.0, 2.0)
    assert np.allclose(c, 2 * math.log(4) + np.array([1, 10, 100]) / 4)
    U = np.ones((10, 4))
    assert oftrl_master_bound(spec, 2.0, U, U) == pytest.approx(2 * math.log(4))


def test_measured_drift():
    assert measured_drift([[0.1, 0.0], [0.15, -0.05]]) == pytest.approx(0.1)


def test_bounds_table_rows():
    rows = bounds_table(table1_specs(10), 10_000, 1.0)
    assert [r["model"] for r in rows] == ["MNL", "NL", "GNL", "CNL", "PCL", "OGEV", "PDGEV"]
    for r in rows:
        lam = r["min_lambda"]
        L = 1.0 if r["variant"] == "MNL" else 2 / lam - 1
        assert r["L"] == pytest.approx(L, rel=1e-12)
        assert r["bound_table"] == pytest.approx(math.sqrt(2 * LN10 * L * 1e4), rel=1e-12)
        assert r["bound_exact"] <= r["bound_table"] + 1e-9
    assert rows[0]["bound_table"] == pytest.approx(214.6, abs=0.1)
    text = format_table(rows)
    assert len(text.splitlines()) == len(rows) + 2


def test_cnl_with_unit_lambda_is_logit_row():
    alpha = np.full((10, 2), 0.5)
    row = bounds_table({"CNL": GevSpec.cnl(alpha, 1.0)}, 10_000, 1.0)[0]
    logit = bounds_table({"MNL": GevSpec.mnl(10)}, 10_000, 1.0)[0]
    assert row["bound_table"] == pytest.approx(logit["bound_table"])


def test_bregman_examples():
    spec = GevSpec.mnl(2)
    assert bregman_gap(spec, [0.3, -0.1], [0, 0], 1.0) == pytest.approx(0.0, abs=1e-15)
    assert bregman_gap(spec, [0.3, -0.1], [2.0, 2.0], 1.0) == pytest.approx(0.0, abs=1e-12)
    assert bregman_gap(spec, [0, 0], [1, 0], 1.0) == pytest.approx(math.log((math.e + 1) / 2) - 0.5, abs=1e-12)
    assert math.log((math.e + 1) / 2) - 0.5 == pytest.approx(0.12011, abs=1e-5)


def test_bregman_bound_random_draws():
    rng = np.random.default_rng(31)
    for spec in table1_specs(6).values():
        L = model_constants(spec).L
        for _ in range(10_000 // 50):
            eta = float(rng.uniform(0.2, 3))
            u_max = float(rng.uniform(0.1, 2))
            theta = rng.uniform(-5, 5, spec.n)
            u = rng.uniform(-u_max, u_max, spec.n)
            assert bregman_gap(spec, theta, u, eta) <= L / (2 * eta) * u_max**2 + 1e-12


def test_hannan_fit_on_exact_curve():
    T = np.array([100, 1000, 10_000])
    fit = hannan_fit(T, 3.0 * np.sqrt(T))
    assert fit.c == pytest.approx(3.0) and fit.r2 == pytest.approx(1.0) and fit.loglog_slope == pytest.approx(-0.5)


@pytest.mark.parametrize("name", ["MNL", "NL", "PCL"])
@pytest.mark.parametrize("kind", ["iid_uniform", "adversarial_alternating", "best_arm_shift"])
def test_regret_within_bound_short_runs(name, kind):
    spec = table1_specs(6)[name]
    for T in (100, 1000):
        U = generate(EnvironmentConfig(kind, spec.n, T, 1.0, seed=T))
        rep = regret_bound(spec, T, 1.0)
        X = ssa_trajectory(spec, rep.eta, U)
        assert regret(RegretLedger.from_arrays(X, U, 1.0)) < rep.bound


def test_oftrl_beats_plain_ssa_on_slow_drift():
    spec = GevSpec.mnl(10)
    wins, runs = 0, 20
    for seed in range(runs):
        U = generate(EnvironmentConfig("slow_drift", 10, 2000, 1.0, seed=seed, B=0.1))
        eta = oftrl_bound(spec, 2000, 0.1).eta
        plain = regret_curve(ssa_trajectory(spec, eta, U), U)[-1]
        opt = regret_curve(ssa_trajectory(spec, eta, U, "one_step"), U)[-1]
        wins += opt <= plain
    assert wins >= 0.9 * runs


def test_random_spec_bound_dominance():
    rng = np.random.default_rng(77)
    for variant in ("GNL", "CNL", "OGEV", "PDGEV"):
        spec = random_spec(variant, 5, rng)
        U = generate(EnvironmentConfig("iid_gaussian_clipped", 5, 3000, 1.0, seed=3))
        rep = regret_bound(spec, 3000, 1.0)
        assert regret_curve(ssa_trajectory(spec, rep.eta, U), U)[-1] < rep.bound
