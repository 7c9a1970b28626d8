import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from omit.imputation import (
    ImputationPlan,
    draw_matrix,
    match_rate,
    materialize,
    plan_naive,
    plan_naive_plus_y,
    plan_omit,
    sharpened_probability,
)
from omit.regression import (
    DesignSpec,
    FittedOutcomeModel,
    FittedPropensityModel,
    fit_outcome_model,
    fit_probit,
    predict_propensity,
)
from omit.simulation import ScenarioConfig, assign_and_mask, generate_population, outcome_spec

from helpers import make_table

probs = st.floats(1e-6, 1 - 1e-6)
dens = st.floats(1e-200, 1e6)


def ps_const(p):
    from omit.special import std_normal_quantile

    return FittedPropensityModel(np.array([std_normal_quantile(p), 0.0]), None, True, 1, 0.0)


def test_sharpen_examples():
    assert sharpened_probability(0.5, 0.3, 0.3)[0] == 0.5
    assert abs(sharpened_probability(0.4, 2.0, 1.0)[0] - 0.8 / 1.4) < 1e-15
    assert sharpened_probability(0.4, 0.7, 0.0)[0] == 1 - 1e-6
    assert sharpened_probability(0.4, 0.0, 0.7)[0] == 1e-6


def test_sharpen_underflow_falls_back_to_propensity():
    q, under = sharpened_probability(np.array([0.3, 0.3]), np.array([0.0, 1.0]), np.array([0.0, 1.0]))
    assert q.tolist() == [0.3, 0.3] and under.tolist() == [True, False]


def test_sharpen_rejects_negative_density():
    with pytest.raises(ValueError):
        sharpened_probability(0.5, -1.0, 1.0)


@settings(max_examples=1000, deadline=None)
@given(probs, dens, dens, st.floats(1e-3, 1e3))
def test_sharpen_scale_invariance(e, f1, f0, c):
    a = sharpened_probability(e, f1, f0)[0]
    b = sharpened_probability(e, c * f1, c * f0)[0]
    assert abs(a - b) <= 1e-12


@settings(max_examples=1000, deadline=None)
@given(probs, probs, dens, dens, st.floats(1.0, 1e3))
def test_sharpen_monotone(e1, e2, f1, f0, k):
    lo_e, hi_e = sorted((e1, e2))
    # non-decreasing in e
    assert sharpened_probability(hi_e, f1, f0)[0] >= sharpened_probability(lo_e, f1, f0)[0] - 1e-15
    # non-decreasing in the ratio f1 / f0
    assert sharpened_probability(e1, k * f1, f0)[0] >= sharpened_probability(e1, f1, f0)[0] - 1e-15


def illustration_table(y_values):
    # y | t=1 ~ N(40 + x b, 0.1), y | t=0 ~ N(x b, 0.1), with 0 < x b < 10
    x = np.array([2.0, 5.0, 8.0, 3.0] + [4.0] * len(y_values))
    t = [1.0, 0.0, 1.0, 0.0] + [np.nan] * len(y_values)
    y = np.array([42.0, 5.0, 48.0, 3.0] + list(y_values))
    return make_table(x, y, t)


@pytest.mark.parametrize("sd", [0.1, np.sqrt(0.1)])
def test_outcome_separates_treatment_groups(sd):
    tab = illustration_table([45.0, 5.0])
    model = FittedOutcomeModel(np.array([0.0, 1.0, 40.0, 0.0]), sd, DesignSpec.interaction(1), 4)
    plan = plan_omit(tab, ps_const(0.4), model, M=5, seed=1)
    q = plan.q_hat[tab.missing]
    assert q[0] >= 1 - 1e-6
    assert q[1] <= 1e-6


def test_zero_effect_outcome_model_reproduces_propensity(small_table):
    flat_effect = FittedOutcomeModel(np.array([1.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]), 1.3,
                                     DesignSpec.interaction(3), 10)
    ps = fit_probit(small_table.X[small_table.observed], small_table.t[small_table.observed])
    a = plan_omit(small_table, ps, flat_effect, 5, 0)
    b = plan_naive(small_table, ps, 5, 0)
    assert np.max(np.abs(a.q_hat - b.q_hat)) < 1e-14


def test_naive_equals_omit_under_flat_outcome(small_table):
    obs = small_table.observed
    ps = fit_probit(small_table.X[obs], small_table.t[obs])
    flat = fit_outcome_model(small_table.X[obs], small_table.y[obs], small_table.t[obs], DesignSpec.flat())
    a = plan_omit(small_table, ps, flat, 5, 0)
    b = plan_naive(small_table, ps, 5, 0)
    assert np.max(np.abs(a.q_hat - b.q_hat)) < 1e-14


def test_naive_plan_uses_propensity():
    tab = make_table([0.0, 1.0, 2.0, 3.0], [1.0, 2.0, 3.0, 4.0], [1.0, 0.0, np.nan, np.nan])
    plan = plan_naive(tab, ps_const(0.4), 3, 0)
    assert np.allclose(plan.q_hat[tab.missing], 0.4, atol=1e-15)
    assert plan.q_hat[0] == 1.0 and plan.q_hat[1] == 0.0


def test_fully_observed_plan_has_nothing_to_impute(small_table):
    full = small_table.replace(t=np.nan_to_num(small_table.t, nan=1.0))
    plan = plan_naive(full, fit_probit(full.X, full.t), 4, 0)
    assert plan.n_imputed == 0
    T = draw_matrix(plan)
    assert np.all(T == full.t[:, None])


def test_naive_plus_y_monotone_in_outcome():
    rng = np.random.default_rng(3)
    n = 400
    x = rng.standard_normal(n)
    t = (rng.random(n) < 0.5).astype(float)
    y = x + 3.0 * t + rng.standard_normal(n)
    tab = make_table(x, y, np.where(rng.random(n) < 0.3, np.nan, t))
    plan = plan_naive_plus_y(tab, 3, 0)
    model = plan.provenance["propensity_with_outcome"]
    mu, sd = plan.provenance["outcome_standardization"]
    y_grid = np.linspace(-2.0, 5.0, 15)
    q = predict_propensity(model, np.column_stack([np.zeros(15), (y_grid - mu) / sd]))
    assert np.all(np.diff(q) >= 0) and q[-1] > q[0]


def test_naive_plus_y_with_zero_outcome_coefficient_matches_naive():
    from omit.special import std_normal_cdf, std_normal_pdf

    rng = np.random.default_rng(8)
    n = 300
    x = rng.standard_normal(n)
    t = (rng.random(n) < std_normal_cdf(0.3 + 0.6 * x)).astype(float)
    obs = np.arange(n) % 4 != 0
    base = fit_probit(x[obs], t[obs])
    # outcome orthogonal to the generalized residuals makes (beta_hat, 0) the MLE
    eta = base.coef[0] + base.coef[1] * x[obs]
    p = std_normal_cdf(eta)
    g = np.where(t[obs] == 1, std_normal_pdf(eta) / p, -std_normal_pdf(eta) / (1 - p))
    y = rng.standard_normal(n)
    y[obs] -= (g @ y[obs]) / (g @ g) * g
    tab = make_table(x, y, np.where(obs, t, np.nan))
    ny = plan_naive_plus_y(tab, 3, 0)
    assert abs(ny.provenance["propensity_with_outcome"].coef[-1]) < 1e-8
    assert np.max(np.abs(ny.q_hat - plan_naive(tab, base, 3, 0).q_hat)) < 1e-8


def test_naive_plus_y_diverges_from_omit_on_cubic_scenario():
    cfg = ScenarioConfig(beta_y=4.0, sigma=1.0, miss_level=0.3, variant="cubic", replicates=1)
    rep = assign_and_mask(generate_population(cfg), cfg, 0)
    tab = rep.table
    obs = tab.observed
    ps = fit_probit(tab.X[obs], tab.t[obs], predictor_columns=[1])
    ym = fit_outcome_model(tab.X[obs], tab.y[obs], tab.t[obs], outcome_spec("OMIT_Correct", cfg))
    omit = plan_omit(tab, ps, ym, 2, 0)
    ny = plan_naive_plus_y(tab, 2, 0)
    assert np.mean(np.abs(omit.q_hat - ny.q_hat)[tab.missing]) > 0.05


def test_plan_validation():
    with pytest.raises(ValueError):
        ImputationPlan("Bogus", np.zeros(2), np.zeros(2, bool), 2, 0)
    with pytest.raises(ValueError):
        ImputationPlan("OMIT", np.zeros(2), np.zeros(2, bool), 0, 0)


def test_near_certain_probability_gives_treated_everywhere():
    q = np.array([1 - 1e-6, 1e-6, 0.5])
    plan = ImputationPlan("NaiveMI", q, np.ones(3, bool), 50, 12)
    T = draw_matrix(plan)
    assert np.all(T[0] == 1) and np.all(T[1] == 0)


def test_half_probability_frequency():
    plan = ImputationPlan("NaiveMI", np.array([0.5]), np.ones(1, bool), 10_000, 99)
    frac = draw_matrix(plan).mean()
    assert abs(frac - 0.5) < 0.02


def test_match_rate():
    T = np.array([[1, 0], [0, 0], [1, 1]])
    assert match_rate(T, np.array([1, 0, 0]), np.array([True, True, False])) == 0.75
    assert np.isnan(match_rate(T, np.array([1, 0, 0]), np.zeros(3, bool)))


@st.composite
def tables_and_plans(draw):
    n = draw(st.integers(2, 40))
    t = np.array(draw(st.lists(st.sampled_from([0.0, 1.0]), min_size=n, max_size=n)))
    miss = np.array(draw(st.lists(st.booleans(), min_size=n, max_size=n)))
    q = draw(arrays(np.float64, n, elements=probs))
    M = draw(st.integers(1, 6))
    seed = draw(st.integers(0, 2**64 - 1))
    tab = make_table(np.arange(n, dtype=float), np.zeros(n), np.where(miss, np.nan, t))
    q_hat = np.where(miss, q, t)
    return tab, ImputationPlan("OMIT", q_hat, tab.missing.copy(), M, seed)


@settings(max_examples=1000, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(tables_and_plans())
def test_observed_treatments_preserved(tp):
    tab, plan = tp
    for ds in materialize(plan, tab):
        obs = tab.observed
        assert np.array_equal(ds.t_star[obs], tab.t[obs])
        assert set(np.unique(ds.t_star)) <= {0, 1}


@settings(max_examples=1000, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(tables_and_plans())
def test_draws_deterministic(tp):
    tab, plan = tp
    a = draw_matrix(plan)
    b = draw_matrix(ImputationPlan(plan.strategy, plan.q_hat.copy(), plan.missing.copy(), plan.M, plan.seed))
    assert a.tobytes() == b.tobytes()
    # imputation m does not depend on how many imputations were requested
    if plan.M > 1:
        fewer = ImputationPlan(plan.strategy, plan.q_hat, plan.missing, plan.M - 1, plan.seed)
        assert np.array_equal(draw_matrix(fewer), a[:, :-1])


def test_omit_correct_matches_truth_more_often_than_naive():
    from omit.simulation import run_scenario

    cfg = ScenarioConfig(beta_y=7.0, sigma=1.0, miss_level=0.3, replicates=100,
                         methods=("OMIT_Correct", "NaiveMI"))
    res = run_scenario(cfg)
    assert res.methods["OMIT_Correct"].match_rate > res.methods["NaiveMI"].match_rate
