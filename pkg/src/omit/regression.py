"""Probit propensity models and Gaussian linear outcome models."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .special import gaussian_density, std_normal_cdf, std_normal_logcdf

PROPENSITY_CLIP = 1e-6
SIGMA_FLOOR = 1e-8
TOL = 1e-10
MAX_ITER = 100
SEPARATION_ETA = 15.0


class SingularDesignError(ValueError):
    pass


class SeparationError(RuntimeError):
    pass


@dataclass(frozen=True)
class FittedPropensityModel:
    coef: np.ndarray
    predictor_columns: tuple[int, ...] | None
    converged: bool
    iterations: int
    loglik: float
    loglik_trace: tuple[float, ...] = field(default=(), repr=False)

    def linear_predictor(self, X) -> np.ndarray:
        X = _select(np.asarray(X, dtype=float), self.predictor_columns)
        if X.shape[1] != self.coef.shape[0] - 1:
            raise ValueError(f"expected {self.coef.shape[0] - 1} predictor columns, got {X.shape[1]}")
        if not np.all(np.isfinite(X)):
            raise ValueError("non-finite covariate value")
        return self.coef[0] + X @ self.coef[1:]


def _select(X: np.ndarray, cols) -> np.ndarray:
    if X.ndim == 1:
        X = X[:, None]
    return X if cols is None else X[:, list(cols)]


def _with_intercept(X: np.ndarray) -> np.ndarray:
    return np.column_stack([np.ones(X.shape[0]), X])


def _check_rank(Z: np.ndarray, names=None) -> None:
    _, R, piv = scipy.linalg.qr(Z, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = diag[0] * max(Z.shape) * np.finfo(float).eps if diag.size else 0.0
    rank = int(np.count_nonzero(diag > tol))
    if rank < Z.shape[1]:
        bad = sorted(int(j) for j in piv[rank:])
        if names is not None:
            bad = [names[j] for j in bad]
        raise SingularDesignError(f"design matrix is rank deficient; dependent columns: {bad}")


def probit_loglik(Z: np.ndarray, t: np.ndarray, beta: np.ndarray) -> float:
    eta = Z @ beta
    return float(np.sum(np.where(t == 1.0, std_normal_logcdf(eta), std_normal_logcdf(-eta))))


def probit_score(Z: np.ndarray, t: np.ndarray, beta: np.ndarray) -> np.ndarray:
    eta = Z @ beta
    logphi = -0.5 * eta * eta - 0.5 * np.log(2.0 * np.pi)
    lam1 = np.exp(logphi - std_normal_logcdf(eta))
    lam0 = np.exp(logphi - std_normal_logcdf(-eta))
    return Z.T @ np.where(t == 1.0, lam1, -lam0)


def fit_probit(X, t, predictor_columns=None) -> FittedPropensityModel:
    """Probit MLE of ``t`` on an intercept plus the selected columns of ``X``.

    Fisher scoring from the zero vector with step halving so the
    log-likelihood never decreases. Rows with missing ``t`` must already be
    removed.
    """
    X = _select(np.asarray(X, dtype=float), predictor_columns)
    t = np.asarray(t, dtype=float)
    if X.shape[0] != t.shape[0]:
        raise ValueError("X and t lengths differ")
    if np.any(np.isnan(t)):
        raise ValueError("fit_probit needs complete cases only")
    if not (np.any(t == 1.0) and np.any(t == 0.0)):
        raise ValueError("need at least one treated and one control row")
    Z = _with_intercept(X)
    _check_rank(Z)

    beta = np.zeros(Z.shape[1])
    ll = probit_loglik(Z, t, beta)
    trace = [ll]
    converged = False
    it = 0
    for it in range(1, MAX_ITER + 1):
        eta = Z @ beta
        logphi = -0.5 * eta * eta - 0.5 * np.log(2.0 * np.pi)
        lam1 = np.exp(logphi - std_normal_logcdf(eta))
        lam0 = np.exp(logphi - std_normal_logcdf(-eta))
        score = Z.T @ np.where(t == 1.0, lam1, -lam0)
        info = (Z * (lam1 * lam0)[:, None]).T @ Z
        try:
            step = scipy.linalg.solve(info, score, assume_a="pos")
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
            raise SeparationError("information matrix became singular; the classes look separated") from None
        new_ll = probit_loglik(Z, t, beta + step)
        halvings = 0
        while not new_ll >= ll and halvings < 50:
            step = step / 2.0
            new_ll = probit_loglik(Z, t, beta + step)
            halvings += 1
        if not new_ll >= ll:
            step = np.zeros_like(step)
            new_ll = ll
        climbing = new_ll > ll
        beta = beta + step
        ll = new_ll
        trace.append(ll)
        if np.linalg.norm(step) < TOL:
            converged = True
            break
        eta = Z @ beta
        separated = np.min(eta[t == 1.0]) > np.max(eta[t == 0.0])
        far = np.all(eta[t == 1.0] > SEPARATION_ETA) or np.all(eta[t == 0.0] < -SEPARATION_ETA)
        if climbing and separated and (far or it >= 25):
            raise SeparationError(
                f"complete separation: the linear predictor splits treated and control rows "
                f"perfectly and the likelihood keeps climbing (iteration {it})"
            )
    return FittedPropensityModel(
        coef=beta,
        predictor_columns=None if predictor_columns is None else tuple(int(c) for c in predictor_columns),
        converged=converged,
        iterations=it,
        loglik=ll,
        loglik_trace=tuple(trace),
    )


def predict_propensity(model: FittedPropensityModel, X) -> np.ndarray:
    """Phi(intercept + x'beta), clipped to [1e-6, 1 - 1e-6]."""
    p = std_normal_cdf(model.linear_predictor(X))
    return np.clip(p, PROPENSITY_CLIP, 1.0 - PROPENSITY_CLIP)


@dataclass(frozen=True)
class DesignSpec:
    """Outcome regression basis.

    Columns are ``[1, main terms..., t, t * interacted terms...]`` where each
    term is ``x[:, col] ** power``.
    """

    kind: str
    terms: tuple[tuple[int, int], ...]
    interacted: tuple[int, ...]

    @classmethod
    def interaction(cls, d: int) -> "DesignSpec":
        terms = tuple((j, 1) for j in range(d))
        return cls("interaction", terms, tuple(range(d)))

    @classmethod
    def flexible(cls, d: int, degree: int = 3, binary=()) -> "DesignSpec":
        """Interaction design plus powers up to ``degree``; 0/1 columns stay linear."""
        binary = set(binary)
        terms = tuple((j, p) for p in range(1, degree + 1) for j in range(d) if p == 1 or j not in binary)
        return cls("flexible", terms, tuple(range(len(terms))))

    @classmethod
    def correct(cls, power: int, linear_col: int = 0, moderator_col: int = 1) -> "DesignSpec":
        # (1, x1, x2^k, t, t * x2^k)
        return cls(f"correct{power}", ((linear_col, 1), (moderator_col, power)), (1,))

    @classmethod
    def flat(cls) -> "DesignSpec":
        return cls("flat", (), ())

    @property
    def width(self) -> int:
        return 1 + len(self.terms) + (0 if self.kind == "flat" else 1 + len(self.interacted))

    def column_names(self, covariate_names=None) -> list[str]:
        def term(j, p):
            base = covariate_names[j] if covariate_names else f"x{j + 1}"
            return base if p == 1 else f"{base}^{p}"

        names = ["(intercept)"] + [term(j, p) for j, p in self.terms]
        if self.kind != "flat":
            names += ["t"] + [f"t:{term(*self.terms[k])}" for k in self.interacted]
        return names

    def build(self, X, t) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        n = X.shape[0]
        t = np.broadcast_to(np.asarray(t, dtype=float), (n,))
        main = [X[:, j] ** p for j, p in self.terms]
        cols = [np.ones(n), *main]
        if self.kind != "flat":
            cols.append(t)
            cols += [t * main[k] for k in self.interacted]
        return np.column_stack(cols)


def build_interaction_design(X, t) -> np.ndarray:
    """Columns ``[1, x_1..x_d, t, t*x_1..t*x_d]``."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    t = np.asarray(t, dtype=float)
    if t.shape[0] != X.shape[0]:
        raise ValueError("X and t lengths differ")
    return DesignSpec.interaction(X.shape[1]).build(X, t)


@dataclass(frozen=True)
class FittedOutcomeModel:
    coef: np.ndarray
    sigma: float
    design_spec: DesignSpec | None
    fitted_on: int
    residuals: np.ndarray = field(repr=False, default=None)

    def mean(self, X, t) -> np.ndarray:
        return self.design_spec.build(X, t) @ self.coef

    def density(self, y, X, t) -> np.ndarray:
        """Fitted density of ``y`` given covariates and treatment ``t`` (scalar or vector)."""
        return gaussian_density(y, self.mean(X, t), self.sigma)


def fit_ols(design, y, column_names=None) -> FittedOutcomeModel:
    """Least squares via pivoted QR; sigma is the residual standard error."""
    A = np.asarray(design, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = A.shape
    if n < p:
        raise SingularDesignError(f"{n} rows cannot identify {p} coefficients")
    Q, R, piv = scipy.linalg.qr(A, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = diag[0] * max(n, p) * np.finfo(float).eps if p else 0.0
    rank = int(np.count_nonzero(diag > tol))
    if rank < p:
        bad = sorted(int(j) for j in piv[rank:])
        if column_names is not None:
            bad = [column_names[j] for j in bad]
        raise SingularDesignError(f"design matrix is rank deficient; dependent columns: {bad}")
    z = scipy.linalg.solve_triangular(R, Q.T @ y)
    coef = np.empty(p)
    coef[piv] = z
    resid = y - A @ coef
    dof = n - p
    rss = float(resid @ resid)
    sigma = float(np.sqrt(rss / dof)) if dof > 0 else 0.0
    return FittedOutcomeModel(coef=coef, sigma=max(sigma, SIGMA_FLOOR), design_spec=None, fitted_on=n, residuals=resid)


def fit_outcome_model(X, y, t, spec: DesignSpec) -> FittedOutcomeModel:
    """Fit ``spec`` to complete-case rows (``t`` fully observed)."""
    t = np.asarray(t, dtype=float)
    if np.any(np.isnan(t)):
        raise ValueError("fit_outcome_model needs complete cases only")
    A = spec.build(X, t)
    m = fit_ols(A, y, spec.column_names())
    return FittedOutcomeModel(m.coef, m.sigma, spec, m.fitted_on, m.residuals)
