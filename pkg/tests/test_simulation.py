import csv
import json
import math

import jsonschema
import numpy as np
import pytest
from scipy.stats import chi2_contingency

from omit.cli import load_schema
from omit.simulation import (
    METHODS,
    ConfigError,
    ScenarioConfig,
    assign_and_mask,
    exchangeable_cholesky,
    expand_grid,
    generate_population,
    missingness_probability,
    run_scenario,
    summarize_grid,
)
from omit.special import std_normal_quantile


def test_defaults():
    c = ScenarioConfig()
    assert (c.n, c.d, c.rho, c.replicates, c.M) == (1000, 10, 0.4, 500, 20)
    assert (c.beta_t2, c.beta_r2, c.gamma) == (0.35, 0.75, 0.1)
    assert c.alpha_t == std_normal_quantile(0.4)
    assert c.alpha_r == std_normal_quantile(0.3)
    assert set(c.methods) == set(METHODS)


@pytest.mark.parametrize("kw,msg", [
    ({"rho": 1.2}, "correlation not positive definite"),
    ({"rho": 1.0}, "correlation not positive definite"),
    ({"rho": -0.2}, "correlation not positive definite"),
    ({"n": 30}, "n must be at least"),
    ({"methods": ("BART",)}, "unknown methods"),
    ({"variant": "quartic"}, "variant"),
])
def test_config_validation(kw, msg):
    with pytest.raises(ConfigError, match=msg):
        ScenarioConfig(**kw)


def test_cholesky_of_exchangeable_matrix():
    L = exchangeable_cholesky(10, 0.4)
    S = L @ L.T
    assert np.allclose(np.diag(S), 1.0) and np.allclose(S[~np.eye(10, dtype=bool)], 0.4)


def test_homogeneous_effect_population():
    pop = generate_population(ScenarioConfig(beta_y=1.0))
    assert np.max(np.abs(pop.outcomes.tau - 1.0)) < 1e-12
    assert abs(pop.tau_fp - 1.0) < 1e-12


def test_heterogeneous_effect_population():
    pop = generate_population(ScenarioConfig(beta_y=4.0))
    x2 = pop.X[:, 1]
    assert abs(pop.tau_fp - (1 + 3 * np.mean(x2**2))) < 1e-12
    assert abs(pop.tau_fp - 4.0) < 0.4


def test_cubic_population_effect():
    pop = generate_population(ScenarioConfig(beta_y=4.0, variant="cubic"))
    assert abs(pop.tau_fp - (1 + 3 * np.mean(pop.X[:, 1] ** 3))) < 1e-12


def test_covariate_correlations():
    X = generate_population(ScenarioConfig()).X
    C = np.corrcoef(X, rowvar=False)
    off = C[~np.eye(10, dtype=bool)]
    assert np.all(np.abs(off - 0.4) < 0.08)


def test_treated_fraction_and_missingness_levels():
    cfg = ScenarioConfig(replicates=100)
    pop = generate_population(cfg)
    reps = [assign_and_mask(pop, cfg, r) for r in range(100)]
    assert abs(np.mean([rep.t_true.mean() for rep in reps]) - 0.40) < 0.02
    realized = np.mean([rep.table.r.mean() for rep in reps])
    # the intercept is the probit of the nominal level; the x2 and outcome
    # terms add spread, so the realized rate is the population average of p
    expected = np.mean([rep.p_true.mean() for rep in reps])
    assert abs(realized - expected) < 0.01
    assert 0.30 <= realized <= 0.36


def test_missingness_monotone_in_level():
    rates = []
    for level in (0.1, 0.3, 0.5):
        cfg = ScenarioConfig(miss_level=level, replicates=20)
        pop = generate_population(cfg)
        masks = [assign_and_mask(pop, cfg, r).table.r for r in range(20)]
        rates.append(np.mean(masks))
        if level > 0.1:
            assert all(np.all(m_hi >= m_lo) for m_hi, m_lo in zip(masks, prev))
        prev = masks
    assert rates[0] < rates[1] < rates[2]


def test_mcar_when_missingness_ignores_everything():
    cfg = ScenarioConfig(beta_r2=0.0, gamma=0.0, replicates=50)
    pop = generate_population(cfg)
    r, hi_x2, hi_y = [], [], []
    for k in range(50):
        rep = assign_and_mask(pop, cfg, k)
        r.append(rep.table.r)
        hi_x2.append(pop.X[:, 1] > 0)
        hi_y.append(rep.table.y > np.median(rep.table.y))
    r = np.concatenate(r)
    for grp in (np.concatenate(hi_x2), np.concatenate(hi_y)):
        tab = [[np.sum(r & grp), np.sum(r & ~grp)], [np.sum(~r & grp), np.sum(~r & ~grp)]]
        assert chi2_contingency(tab)[1] > 0.01


def test_missingness_probability_formula():
    cfg = ScenarioConfig()
    X = np.zeros((2, 10))
    X[1, 1] = 1.0
    p = missingness_probability(X, np.array([0.0, 2.0]), cfg)
    from omit.special import std_normal_cdf

    assert abs(p[0] - 0.3) < 1e-15
    assert abs(p[1] - std_normal_cdf(cfg.alpha_r + 0.75 + 0.2)) < 1e-15


def test_replicate_outcomes_come_from_fixed_population():
    cfg = ScenarioConfig(replicates=5)
    pop = generate_population(cfg)
    digest = pop.digest()
    for k in range(5):
        rep = assign_and_mask(pop, cfg, k)
        expect = np.where(rep.t_true == 1, pop.outcomes.y1, pop.outcomes.y0)
        assert np.array_equal(rep.table.y, expect)
        assert np.array_equal(rep.t_true[rep.table.observed], rep.table.t[rep.table.observed])
    assert pop.digest() == digest == generate_population(cfg).digest()
    # different noise level, same covariates
    other = generate_population(ScenarioConfig(sigma=2.0))
    assert np.array_equal(other.X, pop.X)


SMALL = dict(n=200, replicates=12, M=5, beta_y=7.0, sigma=1.0, miss_level=0.3)


def test_run_scenario_deterministic_and_schedule_independent():
    cfg = ScenarioConfig(**SMALL)
    a = run_scenario(cfg, workers=1)
    b = run_scenario(cfg, workers=1)
    c = run_scenario(cfg, workers=3)
    for m in METHODS:
        for r in (b, c):
            assert a.methods[m].tau_hat.tobytes() == r.methods[m].tau_hat.tobytes()
            assert a.methods[m].ci_low.tobytes() == r.methods[m].ci_low.tobytes()


def test_coverage_flags_consistent():
    res = run_scenario(ScenarioConfig(**SMALL))
    for m, mr in res.methods.items():
        for lo, hi, cov in zip(mr.ci_low, mr.ci_high, mr.covered):
            assert cov == (lo <= res.tau_fp <= hi)
        s = mr.summary(res.tau_fp)
        assert 0.0 <= s["coverage"] <= 1.0
        assert s["n_valid"] + s["excluded"] == 12
    assert res.valid and res.exclusion_rate() == 0.0


def test_summaries_match_hand_computation():
    res = run_scenario(ScenarioConfig(**SMALL))
    mr = res.methods["NaiveMI"]
    s = mr.summary(res.tau_fp)
    diff = mr.tau_hat - res.tau_fp
    assert math.isclose(s["mean_bias"], sum(diff) / len(diff), rel_tol=1e-12)
    assert math.isclose(s["mse"], sum(d * d for d in diff) / len(diff), rel_tol=1e-12)
    assert math.isclose(s["mean_abs_bias"], sum(abs(d) for d in diff) / len(diff), rel_tol=1e-12)


def test_summarize_grid_layout(tmp_path):
    base = ScenarioConfig(n=200, replicates=4, M=3, methods=("OMIT_Correct", "CC"))
    results = [run_scenario(c) for c in expand_grid(base, [1, 7], [1], [0.3])]
    tables = summarize_grid(results, tmp_path)
    assert len(tables["coverage"]) == 4
    assert len(tables["bias"]) == 16
    with open(tmp_path / "coverage.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert {r["method"] for r in rows} == {"OMIT_Correct", "CC"}
    schema = load_schema("diagnostics")
    for res in results:
        d = tmp_path / "results" / res.scenario_id
        assert (d / "bias.csv").exists() and (d / "coverage.csv").exists()
        jsonschema.validate(json.loads((d / "diagnostics.json").read_text()), schema)
    assert not (tmp_path / "naive_plus_y.csv").exists()


def test_empty_method_list(tmp_path):
    res = run_scenario(ScenarioConfig(n=200, replicates=2, methods=()))
    tables = summarize_grid([res], tmp_path)
    assert tables["bias"] == [] and tables["coverage"] == []
    assert (tmp_path / "coverage.csv").read_text().count("\n") == 1


def test_cubic_writes_naive_plus_y_table(tmp_path):
    cfg = ScenarioConfig(n=200, replicates=3, M=3, variant="cubic",
                         methods=("OMIT_lm", "NaivePlusY"))
    tables = summarize_grid([run_scenario(cfg)], tmp_path)
    assert {r["method"] for r in tables["naive_plus_y"]} == {"OMIT_lm", "NaivePlusY"}
    assert (tmp_path / "naive_plus_y.csv").exists()


@pytest.mark.slow
def test_anchor_cells():
    # homogeneous effect, light missingness: complete cases nearly unbiased
    res = run_scenario(ScenarioConfig(beta_y=1.0, sigma=1.0, miss_level=0.1, replicates=100,
                                      methods=("CC",)))
    assert abs(res.summaries()["CC"]["mean_bias"]) <= 0.1
    res = run_scenario(ScenarioConfig(beta_y=7.0, sigma=1.0, miss_level=0.3, replicates=100,
                                      methods=("OMIT_Correct", "NaiveMI")))
    s = res.summaries()
    assert s["NaiveMI"]["coverage"] < 0.5
    assert s["OMIT_Correct"]["coverage"] >= 0.93
    assert s["NaiveMI"]["mse"] >= 2 * s["OMIT_Correct"]["mse"]
