"""End-to-end analysis of a user dataset with missing treatments."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import ObservationTable
from .estimation import ipw_complete_case, ipw_estimate, pool, single_interval
from .imputation import (
    ImputationPlan,
    draw_matrix,
    plan_naive,
    plan_naive_plus_y,
    plan_omit,
    sharpened_probability,
)
from .regression import DesignSpec, fit_outcome_model, fit_probit, predict_propensity

ANALYZE_METHODS = ("omit-lm", "omit-flex", "naive", "naive-y", "cc")


def outcome_design(method: str, X: np.ndarray) -> DesignSpec:
    d = X.shape[1]
    if method == "omit-lm":
        return DesignSpec.interaction(d)
    if method == "omit-flex":
        binary = [j for j, b in enumerate(binary_columns(X)) if b]
        return DesignSpec.flexible(d, binary=binary)
    if method == "flat":
        return DesignSpec.flat()
    raise ValueError(f"no outcome model for method {method!r}")


def binary_columns(X: np.ndarray) -> list[bool]:
    return [bool(np.all(np.isin(X[:, j], (0.0, 1.0)))) for j in range(X.shape[1])]


def fit_complete_case_propensity(table: ObservationTable):
    table.require_both_arms()
    obs = table.observed
    return fit_probit(table.X[obs], table.t[obs])


def build_plan(table: ObservationTable, method: str, M: int, seed: int, flat_outcome: bool = False) -> ImputationPlan:
    ps = fit_complete_case_propensity(table)
    if method == "naive":
        return plan_naive(table, ps, M, seed)
    if method == "naive-y":
        return plan_naive_plus_y(table, M, seed)
    obs = table.observed
    spec = outcome_design("flat" if flat_outcome else method, table.X)
    ym = fit_outcome_model(table.X[obs], table.y[obs], table.t[obs], spec)
    return plan_omit(table, ps, ym, M, seed)


@dataclass
class AnalysisReport:
    method: str
    ate: float
    std_error: float
    ci: tuple[float, float]
    nu: float | None
    M: int | None
    n: int
    n_missing_t: int
    level: float
    notices: list

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "ate": self.ate,
            "std_error": self.std_error,
            "ci": list(self.ci),
            "nu": None if self.nu is None or math.isinf(self.nu) else self.nu,
            "M": self.M,
            "n": self.n,
            "n_missing_t": self.n_missing_t,
            "level": self.level,
            "notices": list(self.notices),
        }


def analyze(
    table: ObservationTable,
    method: str,
    M: int = 20,
    seed: int = 0,
    level: float = 0.95,
    refit_ps_per_imputation: bool = False,
) -> AnalysisReport:
    """IPW estimate of the ATE with the chosen handling of missing treatments.

    Propensity scores come from a probit on all covariates fit to complete
    cases; the same scores serve imputation and estimation unless
    ``refit_ps_per_imputation`` asks for a probit on each completed dataset.
    """
    if method not in ANALYZE_METHODS:
        raise ValueError(f"method must be one of {ANALYZE_METHODS}")
    if not 0.0 < level < 1.0:
        raise ValueError("level must be in (0,1)")
    if M < 1:
        raise ValueError("M must be at least 1")
    notices = []
    ps = fit_complete_case_propensity(table)
    e_hat = predict_propensity(ps, table.X)

    if method == "cc":
        est = ipw_complete_case(table, e_hat)
        return AnalysisReport(method, est.tau_hat, math.sqrt(est.u), single_interval(est, level), None, None,
                              table.n, table.n_missing, level, notices)

    if table.n_missing == 0:
        notices.append("all treatments observed; multiple imputation reduces to a single analysis (M = 1)")
        est = ipw_estimate(table.y, table.t, e_hat)
        return AnalysisReport(method, est.tau_hat, math.sqrt(est.u), single_interval(est, level), None, 1,
                              table.n, 0, level, notices)

    if M < 2:
        raise ValueError("pooling needs M >= 2 when treatments are missing")
    plan = build_plan(table, method, M, seed)
    if plan.underflow_count:
        notices.append(f"{plan.underflow_count} units had vanishing outcome densities; used the propensity score")
    T = draw_matrix(plan)
    ests = []
    for m in range(M):
        e_m = e_hat
        if refit_ps_per_imputation:
            e_m = predict_propensity(fit_probit(table.X, T[:, m]), table.X)
        ests.append(ipw_estimate(table.y, T[:, m], e_m))
    pe = pool(ests, level)
    return AnalysisReport(method, pe.tau_bar, pe.std_error, (pe.ci_low, pe.ci_high), pe.nu, M,
                          table.n, table.n_missing, level, notices)


@dataclass
class ProbabilityComparison:
    units: np.ndarray
    q_omit: np.ndarray
    q_naive: np.ndarray
    y: np.ndarray
    threshold: float
    n_compared: int
    fraction_omit_higher: float | None

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "n_missing": int(self.units.size),
            "n_compared": self.n_compared,
            "fraction_omit_higher": self.fraction_omit_higher,
            "mean_y_compared": float(np.mean(self.y[self.q_omit > self.threshold])) if self.n_compared else None,
        }


def compare_probabilities(
    table: ObservationTable, method: str = "omit-lm", threshold: float = 0.25, flat_outcome: bool = False
) -> ProbabilityComparison:
    """Outcome-assisted versus propensity-only imputation probabilities.

    Among missing units whose outcome-assisted probability exceeds
    ``threshold``, reports the share where it also exceeds the propensity-only
    probability; exact ties count one half.
    """
    ps = fit_complete_case_propensity(table)
    miss = table.missing
    idx = np.flatnonzero(miss)
    e = predict_propensity(ps, table.X[miss])
    obs = table.observed
    spec = outcome_design("flat" if flat_outcome else method, table.X)
    ym = fit_outcome_model(table.X[obs], table.y[obs], table.t[obs], spec)
    Xm, yv = table.X[miss], table.y[miss]
    q, _ = sharpened_probability(e, ym.density(yv, Xm, 1.0), ym.density(yv, Xm, 0.0))
    q = np.atleast_1d(q)
    sel = q > threshold
    k = int(sel.sum())
    frac = None
    if k:
        higher = np.count_nonzero(q[sel] > e[sel])
        ties = np.count_nonzero(q[sel] == e[sel])
        frac = (higher + 0.5 * ties) / k
    return ProbabilityComparison(idx, q, e, yv, threshold, k, frac)
