"""IPW estimation on a single dataset and Rubin's rules pooling."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .data import ObservationTable
from .regression import PROPENSITY_CLIP
from .special import student_t_quantile


class LargeWeightWarning(UserWarning):
    """A propensity score sits on a clip bound, so its IPW weight is huge."""


@dataclass(frozen=True)
class IPWEstimate:
    tau_hat: float
    u: float
    n_used: int
    weights_summary: tuple[float, float, float]

    def to_dict(self) -> dict:
        return {
            "tau_hat": self.tau_hat,
            "u": self.u,
            "n_used": self.n_used,
            "weights_summary": list(self.weights_summary),
        }


@dataclass(frozen=True)
class PooledEstimate:
    tau_bar: float
    u_bar: float
    b: float
    T_M: float
    nu: float
    ci_low: float
    ci_high: float
    level: float
    M: int

    @property
    def std_error(self) -> float:
        return math.sqrt(self.T_M)

    def to_dict(self) -> dict:
        return {
            "tau_bar": self.tau_bar,
            "u_bar": self.u_bar,
            "b": self.b,
            "T_M": self.T_M,
            "nu": None if math.isinf(self.nu) else self.nu,
            "ci": [self.ci_low, self.ci_high],
            "level": self.level,
            "M": self.M,
        }


def ipw_contributions(y, t_star, e_hat) -> np.ndarray:
    """Per-unit terms y t/e - y (1 - t)/(1 - e); works column-wise on n x M ``t_star``."""
    y = np.asarray(y, dtype=float)
    e = np.asarray(e_hat, dtype=float)
    ts = np.asarray(t_star, dtype=float)
    if ts.ndim == 2:
        y, e = y[:, None], e[:, None]
    return y * ts / e - y * (1.0 - ts) / (1.0 - e)


def _weights_summary(t_star, e) -> tuple[float, float, float]:
    w = np.where(np.asarray(t_star) == 1, 1.0 / e, 1.0 / (1.0 - e))
    return float(w.min()), float(w.max()), float(w.mean())


def ipw_estimate(y, t_star, e_hat, denominator_n: int | None = None) -> IPWEstimate:
    """Horvitz-Thompson style IPW difference with a linearization variance.

    ``u = sum((psi - mean(psi))**2) / (n (n - 1))`` with ``psi`` the per-unit
    contributions; propensity-estimation uncertainty is ignored.
    """
    y = np.asarray(y, dtype=float)
    t_star = np.asarray(t_star, dtype=float)
    e = np.asarray(e_hat, dtype=float)
    n = y.shape[0]
    if t_star.shape != (n,) or e.shape != (n,):
        raise ValueError("y, t_star and e_hat must have the same length")
    if n < 2:
        raise ValueError("need at least two units")
    if np.any(~(e > 0.0)) or np.any(~(e < 1.0)):
        raise ValueError("propensity scores must lie in (0, 1)")
    if np.any(np.isnan(t_star)):
        raise ValueError("t_star has missing entries")
    if np.any((e <= PROPENSITY_CLIP) | (e >= 1.0 - PROPENSITY_CLIP)):
        warnings.warn("propensity score at a clip bound; IPW weights are extreme", LargeWeightWarning, stacklevel=2)
    psi = ipw_contributions(y, t_star, e)
    denom = n if denominator_n is None else denominator_n
    tau = float(psi.sum() / denom)
    u = float(np.sum((psi - psi.mean()) ** 2) / (n * (n - 1)))
    return IPWEstimate(tau, u, n, _weights_summary(t_star, e))


def ipw_estimate_columns(y, T_star, e_hat) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized ``ipw_estimate`` over the columns of an n x M matrix.

    Returns arrays of point estimates and variances.
    """
    psi = ipw_contributions(y, T_star, e_hat)
    n = psi.shape[0]
    tau = psi.sum(axis=0) / n
    u = np.sum((psi - psi.mean(axis=0)) ** 2, axis=0) / (n * (n - 1))
    return tau, u


def ipw_complete_case(table: ObservationTable, e_hat) -> IPWEstimate:
    """IPW restricted to units with observed treatment, divided by n_obs."""
    e_hat = np.asarray(e_hat, dtype=float)
    obs = table.observed
    tobs = table.t[obs]
    if not (np.any(tobs == 1.0) and np.any(tobs == 0.0)):
        raise ValueError("complete cases must contain both treated and control units")
    if obs.sum() < 2:
        raise ValueError("need at least two complete cases")
    if e_hat.shape[0] == table.n:
        e_hat = e_hat[obs]
    return ipw_estimate(table.y[obs], tobs, e_hat)


def rubin_combine(tau_hats, us) -> tuple[float, float, float, float, float]:
    """(tau_bar, u_bar, b, T_M, nu) for M >= 2 completed-data analyses.

    ``nu`` is ``inf`` when the between-imputation variance is zero.
    """
    tau_hats = np.asarray(tau_hats, dtype=float)
    us = np.asarray(us, dtype=float)
    M = tau_hats.shape[0]
    if M < 2:
        raise ValueError("pooling needs at least two imputations")
    if us.shape != tau_hats.shape:
        raise ValueError("tau_hats and us differ in length")
    tau_bar = float(np.mean(tau_hats))
    u_bar = float(np.mean(us))
    b = float(np.sum((tau_hats - tau_bar) ** 2) / (M - 1))
    T_M = (1.0 + 1.0 / M) * b + u_bar
    if b > 0:
        nu = (M - 1) * (1.0 + u_bar / ((1.0 + 1.0 / M) * b)) ** 2
    else:
        nu = math.inf
    return tau_bar, u_bar, b, T_M, nu


def pool(estimates, level: float = 0.95) -> PooledEstimate:
    """Combine M IPWEstimates (or (tau_hat, u) pairs) with Rubin's rules."""
    if not 0.0 < level < 1.0:
        raise ValueError("level must be in (0,1)")
    pairs = [(e.tau_hat, e.u) if isinstance(e, IPWEstimate) else tuple(e) for e in estimates]
    tau_hats, us = zip(*pairs) if pairs else ((), ())
    tau_bar, u_bar, b, T_M, nu = rubin_combine(tau_hats, us)
    half = student_t_quantile((1.0 + level) / 2.0, nu) * math.sqrt(T_M)
    return PooledEstimate(tau_bar, u_bar, b, T_M, nu, tau_bar - half, tau_bar + half, level, len(pairs))


def single_interval(est: IPWEstimate, level: float = 0.95) -> tuple[float, float]:
    """Normal-theory interval for one analysis (complete cases, or M = 1)."""
    half = student_t_quantile((1.0 + level) / 2.0, math.inf) * math.sqrt(est.u)
    return est.tau_hat - half, est.tau_hat + half
