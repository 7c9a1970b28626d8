"""Bias algebra for per-imputation IPW and Monte Carlo checks of its claims.

Missingness probabilities may depend on the realized outcome, so a scenario
carries ``p`` (evaluated at ``y1``) and optionally ``p_control`` (evaluated at
``y0``). When ``p_control`` is omitted the same vector serves both.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .data import PotentialOutcomeTable, standardize
from .simulation import (
    MODERATOR,
    ScenarioConfig,
    draw_potential_outcomes,
    generate_covariates,
    generate_population,
    outcome_means,
    true_propensity,
)
from .special import gaussian_density, std_normal_cdf
from .rng import substream

PASS_SE = 4.0
IDENTITY_TOL = 1e-12

DensityFn = Callable[[np.ndarray, int], np.ndarray]  # (y, t) -> f(y | x_i, t) per unit


@dataclass(frozen=True)
class OracleScenario:
    X: np.ndarray
    outcomes: PotentialOutcomeTable
    e: np.ndarray
    p: np.ndarray
    density: DensityFn | None = None
    p_control: np.ndarray | None = None

    def __post_init__(self):
        if np.any(self.e <= 0) or np.any(self.e >= 1):
            raise ValueError("true propensities must lie in (0, 1)")
        for p in (self.p, self.p_control):
            if p is not None and (np.any(p < 0) or np.any(p >= 1)):
                raise ValueError("missingness probabilities must lie in [0, 1)")

    @property
    def p1(self) -> np.ndarray:
        return self.p

    @property
    def p0(self) -> np.ndarray:
        return self.p if self.p_control is None else self.p_control


@dataclass(frozen=True)
class ImputationProbQuad:
    m11: np.ndarray
    m01: np.ndarray
    m10: np.ndarray
    m00: np.ndarray

    def normalization_error(self) -> float:
        return float(max(np.max(np.abs(self.m11 + self.m10 - 1.0)), np.max(np.abs(self.m01 + self.m00 - 1.0))))


def perfect_quads(n: int) -> ImputationProbQuad:
    one, zero = np.ones(n), np.zeros(n)
    return ImputationProbQuad(one, zero, zero, one)


def oracle_imputation_probs(scenario: OracleScenario, strategy: str = "OMIT") -> ImputationProbQuad:
    """Probabilities that the imputation returns each treatment given the true one.

    ``OMIT`` uses the true propensity and true outcome densities evaluated at
    both potential outcomes; ``Naive`` uses the propensity alone.
    """
    e = scenario.e
    if strategy == "Naive":
        return ImputationProbQuad(e.copy(), e.copy(), 1.0 - e, 1.0 - e)
    if strategy != "OMIT":
        raise ValueError(f"unknown strategy {strategy!r}")
    if scenario.density is None:
        raise ValueError("OMIT quads need the outcome densities")
    y1, y0 = scenario.outcomes.y1, scenario.outcomes.y0
    d11, d10 = scenario.density(y1, 1), scenario.density(y1, 0)
    d01, d00 = scenario.density(y0, 1), scenario.density(y0, 0)
    return quads_from_densities(e, d11, d10, d01, d00)


def quads_from_densities(e, d11, d10, d01, d00) -> ImputationProbQuad:
    den1 = d11 * e + d10 * (1.0 - e)
    den0 = d01 * e + d00 * (1.0 - e)
    if np.any(den1 <= 0) or np.any(den0 <= 0):
        raise ValueError("outcome densities vanish for some unit")
    m11 = d11 * e / den1
    m01 = d01 * e / den0
    return ImputationProbQuad(m11, m01, 1.0 - m11, 1.0 - m01)


def bias_B(scenario: OracleScenario, quads: ImputationProbQuad) -> float:
    """Finite-population bias of one completed-data IPW estimate (true e)."""
    e = scenario.e
    y1, y0 = scenario.outcomes.y1, scenario.outcomes.y0
    if quads.m11.shape != e.shape:
        raise ValueError("quads do not match the scenario length")
    t1 = scenario.p1 * y1 * (1.0 - quads.m11 + quads.m10 * e / (1.0 - e))
    t0 = scenario.p0 * y0 * (1.0 - quads.m00 + quads.m01 * (1.0 - e) / e)
    return float(-np.mean(t1 - t0))


def naive_bias_closed_form(scenario: OracleScenario) -> float:
    y1, y0 = scenario.outcomes.y1, scenario.outcomes.y0
    return float(-np.mean(scenario.p1 * y1 - scenario.p0 * y0))


@dataclass
class CheckReport:
    check: str
    replicates: int
    mean: float
    mc_se: float
    standardized: float
    passed: bool
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def clean(v):
            if isinstance(v, (float, np.floating)):
                v = float(v)
                return v if math.isfinite(v) else None
            if isinstance(v, np.bool_):
                return bool(v)
            return v

        return {
            "check": self.check,
            "replicates": self.replicates,
            "mean": clean(self.mean),
            "mc_se": clean(self.mc_se),
            "standardized": clean(self.standardized),
            "pass": bool(self.passed),
            "details": {k: clean(v) for k, v in self.details.items()},
        }


def _mc_summary(values) -> tuple[float, float, float]:
    v = np.asarray(values, dtype=float)
    mean = float(v.mean())
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else math.inf
    z = mean / se if se > 0 else (0.0 if mean == 0 else math.copysign(math.inf, mean))
    return mean, se, z


def _outcome_density(X, config: ScenarioConfig) -> DensityFn:
    mu1, mu0 = outcome_means(X, config.beta_y, config.power)

    def f(y, t):
        return gaussian_density(y, mu1 if t == 1 else mu0, config.sigma)

    return f


def _standardization(X, config: ScenarioConfig) -> tuple[float, float]:
    # Fixed constants for the outcome term of the missingness model, from one
    # pilot assignment, so p is a fixed function of (x, y).
    rng = substream(config.seed, "pilot-standardization")
    po = draw_potential_outcomes(X, config, rng)
    t = rng.random(X.shape[0]) < true_propensity(X, config)
    _, mu, sd = standardize(np.where(t, po.y1, po.y0))
    return mu, sd


def oracle_scenario(X, outcomes: PotentialOutcomeTable, config: ScenarioConfig, ystd=None) -> OracleScenario:
    """True propensities, outcome-dependent missingness probabilities and densities."""
    mu, sd = ystd or _standardization(X, config)
    lin = config.alpha_r + config.beta_r2 * X[:, MODERATOR]
    p1 = std_normal_cdf(lin + config.gamma * (outcomes.y1 - mu) / sd)
    p0 = std_normal_cdf(lin + config.gamma * (outcomes.y0 - mu) / sd)
    return OracleScenario(X, outcomes, true_propensity(X, config), p1, _outcome_density(X, config), p0)


def theorem1_config(seed: int = 0) -> ScenarioConfig:
    return ScenarioConfig(beta_y=4.0, sigma=1.0, miss_level=0.3, seed=seed)


def verify_theorem1(config: ScenarioConfig, replicates: int = 2000, strategy: str = "OMIT") -> CheckReport:
    """Expectation of the bias over fresh potential outcomes, covariates held fixed.

    For ``OMIT`` (true models) the mean should vanish; for ``Naive`` it should
    match the closed form and be clearly nonzero.
    """
    X = generate_covariates(config)
    ystd = _standardization(X, config)
    B = np.empty(replicates)
    closed = np.empty(replicates)
    for r in range(replicates):
        po = draw_potential_outcomes(X, config, substream(config.seed, "theorem1", r))
        sc = oracle_scenario(X, po, config, ystd)
        B[r] = bias_B(sc, oracle_imputation_probs(sc, strategy))
        closed[r] = naive_bias_closed_form(sc)
    mean, se, z = _mc_summary(B)
    if strategy == "OMIT":
        passed = abs(mean) <= PASS_SE * se
        name = "theorem1"
    else:
        passed = z < -PASS_SE
        name = "theorem1-naive-control"
    details = {"strategy": strategy, "beta_y": config.beta_y, "sigma": config.sigma,
               "miss_level": config.miss_level, "closed_form_mean": float(closed.mean())}
    if strategy == "Naive":
        details["max_identity_error"] = float(np.max(np.abs(B - closed)))
    return CheckReport(name, replicates, mean, se, z, bool(passed), details)


PROP1_CONDITIONS = {
    # missingness depends on x only; t is then independent of r given x
    "homogeneous": dict(beta_y=1.0, beta_r2=0.75, gamma=0.0),
    "mcar": dict(beta_y=7.0, beta_r2=0.0, gamma=0.0),
    "negative-control": dict(beta_y=7.0, beta_r2=0.75, gamma=0.0),
}


def prop1_config(condition: str, seed: int = 0, miss_level: float = 0.3) -> ScenarioConfig:
    return ScenarioConfig(sigma=1.0, miss_level=miss_level, seed=seed, **PROP1_CONDITIONS[condition])


def _cc_replicates(config: ScenarioConfig, outcomes: PotentialOutcomeTable, X, replicates: int):
    """Complete-case IPW with true propensities, redrawing when an arm is empty."""
    from .estimation import ipw_complete_case
    from .simulation import Population, assign_and_mask

    pop = Population(X, outcomes)
    cfg = replace(config, replicates=10 * replicates + 10)
    est = []
    redraws = 0
    k = 0
    while len(est) < replicates:
        if k >= cfg.replicates:
            raise RuntimeError("too many redraws for empty complete-case arms")
        rep = assign_and_mask(pop, cfg, k)
        k += 1
        tobs = rep.table.t[rep.table.observed]
        if not (np.any(tobs == 1) and np.any(tobs == 0)):
            redraws += 1
            continue
        est.append(ipw_complete_case(rep.table, rep.e_true).tau_hat)
    return np.array(est), redraws


def verify_proposition1(
    condition: str,
    replicates: int = 500,
    seed: int = 0,
    inject_heterogeneity: bool = False,
    config: ScenarioConfig | None = None,
) -> CheckReport:
    """Unbiasedness of complete-case IPW with true propensities.

    ``condition`` is ``homogeneous`` or ``mcar``; the report also carries the
    negative control (heterogeneous effects, x-dependent missingness), which
    is expected to fail. ``inject_heterogeneity`` swaps in heterogeneous
    potential outcomes while keeping the stated condition, a hook for testing
    that the check can fail.
    """
    config = config or prop1_config(condition, seed)
    pop = generate_population(config)
    outcomes = pop.outcomes
    if inject_heterogeneity:
        outcomes = generate_population(replace(config, beta_y=7.0)).outcomes
    est, redraws = _cc_replicates(config, outcomes, pop.X, replicates)
    tau_fp = outcomes.tau_fp
    mean, se, z = _mc_summary(est - tau_fp)
    report = CheckReport(
        f"prop1-{'homog' if condition == 'homogeneous' else condition}",
        replicates, mean, se, z, abs(mean) <= PASS_SE * se,
        {"condition": condition, "tau_fp": tau_fp, "redraws": redraws,
         "redraw_rate": redraws / (replicates + redraws), "injected_heterogeneity": inject_heterogeneity},
    )
    if condition != "negative-control":
        neg_cfg = prop1_config("negative-control", config.seed, config.miss_level)
        neg_pop = generate_population(neg_cfg)
        neg, _ = _cc_replicates(neg_cfg, neg_pop.outcomes, neg_pop.X, replicates)
        nm, nse, nz = _mc_summary(neg - neg_pop.tau_fp)
        report.details.update(negative_control_mean=nm, negative_control_se=nse,
                              negative_control_standardized=nz,
                              negative_control_detected=bool(abs(nm) > PASS_SE * nse))
    return report


def verify_bias_formula(config: ScenarioConfig, strategy: str, replicates: int = 2000) -> CheckReport:
    """Simulated mean of (per-imputation IPW - tau) against the closed-form bias.

    Potential outcomes stay fixed; treatments, missingness and imputations are
    redrawn, with true propensities and oracle imputation probabilities.
    """
    X = generate_covariates(config)
    ystd = _standardization(X, config)
    po = generate_population(config).outcomes
    sc = oracle_scenario(X, po, config, ystd)
    quads = oracle_imputation_probs(sc, strategy)
    predicted = bias_B(sc, quads)
    n = X.shape[0]
    e = sc.e
    diffs = np.empty(replicates)
    for r in range(replicates):
        rng = substream(config.seed, "bias-formula", strategy, r)
        u = rng.random((3, n))
        t = u[0] < e
        p = np.where(t, sc.p1, sc.p0)
        miss = u[1] < p
        q = np.where(t, quads.m11, quads.m01)
        t_star = np.where(miss, u[2] < q, t)
        y = np.where(t, po.y1, po.y0)
        tau_m = np.mean(y * t_star / e - y * (~t_star) / (1.0 - e))
        diffs[r] = tau_m - po.tau_fp
    mean, se, _ = _mc_summary(diffs)
    z = (mean - predicted) / se
    return CheckReport(f"bias-formula-{strategy.lower()}", replicates, mean, se, z,
                       abs(mean - predicted) <= PASS_SE * se, {"predicted_bias": predicted})


def random_oracle_scenario(rng: np.random.Generator, n: int = 1000) -> OracleScenario:
    X = rng.standard_normal((n, 2))
    y1 = rng.normal(2.0, 2.0, n)
    y0 = rng.normal(0.0, 2.0, n)
    e = rng.uniform(0.05, 0.95, n)
    p = rng.uniform(0.0, 0.9, n)
    mu1, mu0 = rng.normal(1.0, 1.0, n), rng.normal(0.0, 1.0, n)

    def dens(y, t):
        return gaussian_density(y, mu1 if t == 1 else mu0, 1.5)

    return OracleScenario(X, PotentialOutcomeTable(y1, y0), e, p, dens)


def verify_bias_identities(seed: int = 0, populations: int = 20, n: int = 1000) -> list[CheckReport]:
    """Exact algebraic checks on random populations (tolerance 1e-12)."""
    errs = {"perfect-quads-zero": 0.0, "naive-closed-form": 0.0, "linear-in-p": 0.0,
            "quad-normalization": 0.0, "zero-missingness": 0.0}
    for k in range(populations):
        sc = random_oracle_scenario(substream(seed, "identities", k), n)
        naive = oracle_imputation_probs(sc, "Naive")
        omit = oracle_imputation_probs(sc, "OMIT")
        errs["perfect-quads-zero"] = max(errs["perfect-quads-zero"], abs(bias_B(sc, perfect_quads(n))))
        errs["naive-closed-form"] = max(errs["naive-closed-form"],
                                        abs(bias_B(sc, naive) + np.mean(sc.p * sc.outcomes.tau)))
        base = replace(sc, p=sc.p / 2.5)
        doubled = replace(sc, p=base.p * 2.0)
        errs["linear-in-p"] = max(errs["linear-in-p"], abs(bias_B(doubled, omit) - 2.0 * bias_B(base, omit)))
        errs["quad-normalization"] = max(errs["quad-normalization"], omit.normalization_error(),
                                         naive.normalization_error())
        errs["zero-missingness"] = max(errs["zero-missingness"], abs(bias_B(replace(sc, p=np.zeros(n)), omit)))
    return [
        CheckReport(f"bias-identity:{name}", populations, float(err), 0.0, 0.0, err <= IDENTITY_TOL, {"tolerance": IDENTITY_TOL})
        for name, err in errs.items()
    ]
