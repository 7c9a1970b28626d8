"""Normal and Student-t distribution helpers."""

from __future__ import annotations

import math

import numpy as np
from scipy import special as sc

_SQRT2PI = math.sqrt(2.0 * math.pi)


def _check_prob(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if np.any(~np.isfinite(p)) or np.any(p <= 0.0) or np.any(p >= 1.0):
        raise ValueError("probability must lie strictly inside (0, 1)")
    return p


def std_normal_cdf(z):
    """Phi(z), computed as erfc(-z/sqrt(2))/2."""
    out = 0.5 * sc.erfc(-np.asarray(z, dtype=float) / math.sqrt(2.0))
    return float(out) if np.ndim(out) == 0 else out


def std_normal_logcdf(z):
    return sc.log_ndtr(np.asarray(z, dtype=float))


def std_normal_pdf(z):
    z = np.asarray(z, dtype=float)
    out = np.exp(-0.5 * z * z) / _SQRT2PI
    return float(out) if np.ndim(out) == 0 else out


def std_normal_quantile(p):
    out = sc.ndtri(_check_prob(p))
    return float(out) if np.ndim(out) == 0 else out


def student_t_quantile(p, nu):
    """Quantile of Student's t with real-valued ``nu``; ``nu = inf`` gives the normal."""
    p = _check_prob(p)
    nu = float(nu)
    if not nu > 0:
        raise ValueError("degrees of freedom must be positive")
    if math.isinf(nu):
        return std_normal_quantile(p)
    out = sc.stdtrit(nu, p)
    return float(out) if np.ndim(out) == 0 else out


def gaussian_density(y, mu, sigma):
    """N(mu, sigma^2) density evaluated at y (broadcasts)."""
    sigma = np.asarray(sigma, dtype=float)
    if np.any(~(sigma > 0)):
        raise ValueError("sigma must be positive")
    z = (np.asarray(y, dtype=float) - mu) / sigma
    out = np.exp(-0.5 * z * z) / (sigma * _SQRT2PI)
    return float(out) if np.ndim(out) == 0 else out
