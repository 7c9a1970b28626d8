"""Imputation probabilities for missing treatments and completed-data draws."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import CompletedDataset, ObservationTable, standardize
from .regression import (
    PROPENSITY_CLIP,
    FittedOutcomeModel,
    FittedPropensityModel,
    fit_probit,
    predict_propensity,
)
from .rng import counter_uniforms

STRATEGIES = ("OMIT", "NaiveMI", "NaivePlusY")


def sharpened_probability(e_hat, f1, f0):
    """Outcome-sharpened treatment probability e*f1 / (e*f1 + (1-e)*f0).

    Returns ``(q, underflow)`` where ``underflow`` flags entries whose two
    densities were both zero; those fall back to ``q = e_hat``. Results are
    clipped to [1e-6, 1 - 1e-6].
    """
    e = np.asarray(e_hat, dtype=float)
    f1 = np.asarray(f1, dtype=float)
    f0 = np.asarray(f0, dtype=float)
    if np.any(f1 < 0) or np.any(f0 < 0):
        raise ValueError("densities must be non-negative")
    num = e * f1
    den = num + (1.0 - e) * f0
    underflow = den <= 0.0
    with np.errstate(invalid="ignore", divide="ignore"):
        q = np.where(underflow, e, num / np.where(underflow, 1.0, den))
    q = np.clip(q, PROPENSITY_CLIP, 1.0 - PROPENSITY_CLIP)
    if q.ndim == 0:
        return float(q), bool(underflow)
    return q, underflow


@dataclass(frozen=True)
class ImputationPlan:
    """Per-unit probabilities of ``t* = 1``.

    Observed units carry their known treatment (0 or 1) in ``q_hat``.
    """

    strategy: str
    q_hat: np.ndarray
    missing: np.ndarray
    M: int
    seed: int
    provenance: dict = field(default_factory=dict, compare=False)
    underflow_count: int = 0

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.M < 1:
            raise ValueError("M must be at least 1")

    @property
    def n_imputed(self) -> int:
        return int(np.count_nonzero(self.missing))


def _assemble(strategy, table: ObservationTable, q_missing, M, seed, provenance, underflow=0):
    q = np.where(table.observed, np.nan_to_num(table.t), 0.0)
    q[table.missing] = q_missing
    return ImputationPlan(strategy, q, table.missing.copy(), int(M), int(seed), provenance, int(underflow))


def plan_omit(
    table: ObservationTable,
    ps_model: FittedPropensityModel,
    y_model: FittedOutcomeModel,
    M: int,
    seed: int,
) -> ImputationPlan:
    miss = table.missing
    Xm, ym = table.X[miss], table.y[miss]
    e = predict_propensity(ps_model, Xm)
    f1 = y_model.density(ym, Xm, 1.0)
    f0 = y_model.density(ym, Xm, 0.0)
    q, underflow = sharpened_probability(e, f1, f0)
    prov = {"propensity": ps_model, "outcome": y_model}
    return _assemble("OMIT", table, q, M, seed, prov, np.count_nonzero(underflow))


def plan_naive(table: ObservationTable, ps_model: FittedPropensityModel, M: int, seed: int) -> ImputationPlan:
    e = predict_propensity(ps_model, table.X[table.missing])
    return _assemble("NaiveMI", table, e, M, seed, {"propensity": ps_model})


def plan_naive_plus_y(table: ObservationTable, M: int, seed: int, predictor_columns=None) -> ImputationPlan:
    """Single probit of t on covariates and the standardized outcome.

    The outcome is standardized with complete-case mean and sd, then the same
    transform is applied to every unit.
    """
    obs = table.observed
    _, mu, sd = standardize(table.y[obs], table.outcome_name)
    y_tilde = (table.y - mu) / sd
    X = table.X if predictor_columns is None else table.X[:, list(predictor_columns)]
    Z = np.column_stack([X, y_tilde])
    model = fit_probit(Z[obs], table.t[obs])
    q = predict_propensity(model, Z[table.missing])
    prov = {"propensity_with_outcome": model, "outcome_standardization": (mu, sd)}
    return _assemble("NaivePlusY", table, q, M, seed, prov)


def draw_matrix(plan: ImputationPlan) -> np.ndarray:
    """n x M matrix of completed treatments (int8).

    Unit ``i`` under imputation ``m`` uses a uniform that depends only on
    ``(seed, i, m)``.
    """
    T = np.repeat(plan.q_hat.astype(np.int8)[:, None], plan.M, axis=1)
    idx = np.flatnonzero(plan.missing)
    if idx.size:
        q = plan.q_hat[idx]
        for m in range(plan.M):
            u = counter_uniforms(plan.seed, idx, m + 1)
            T[idx, m] = u < q
    return T


def materialize(plan: ImputationPlan, table: ObservationTable) -> list[CompletedDataset]:
    T = draw_matrix(plan)
    return [CompletedDataset(table, T[:, m], m + 1) for m in range(plan.M)]


def match_rate(T_star: np.ndarray, t_true, missing) -> float:
    """Fraction of imputed entries equal to the hidden true treatment."""
    missing = np.asarray(missing, dtype=bool)
    if not np.any(missing):
        return float("nan")
    truth = np.asarray(t_true)[missing][:, None]
    return float(np.mean(T_star[missing] == truth))
