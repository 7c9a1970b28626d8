"""Synthetic stand-in for an NLSY-style income / math-score dataset.

Column roles mirror a study of high family income (top quartile) on a math
test score, with about 20% of incomes unreported and missingness driven by
covariates. All values are simulated.
"""

from __future__ import annotations

import numpy as np

from .data import ObservationTable, write_csv
from .rng import substream
from .special import std_normal_cdf, std_normal_quantile

COVARIATES = (
    "male",
    "nonwhite",
    "birth_weight",
    "mother_afqt",
    "mother_age",
    "mother_college",
    "breastfed_24wk",
    "daycare",
    "premature",
)
OUTCOME = "piatm_dev"
TREATMENT = "high_income"


def make_standin(
    n: int = 2189, seed: int = 0, effect: float = 3.0, missing_rate: float = 0.2, noise_sd: float = 11.0
) -> ObservationTable:
    """Outcome is the score's deviation from a norm of 100."""
    rng = substream(seed, "nlsy-standin", n)
    male = rng.random(n) < 0.5
    nonwhite = rng.random(n) < 0.45
    afqt = rng.standard_normal(n) - 0.5 * nonwhite
    mother_age = 24.0 + 3.0 * rng.standard_normal(n) + 1.2 * afqt
    college = rng.random(n) < std_normal_cdf(-0.6 + 0.8 * afqt)
    birth_weight = 118.0 + 20.0 * rng.standard_normal(n) - 4.0 * nonwhite
    premature = rng.random(n) < 0.08 + 0.1 * (birth_weight < 95.0)
    breastfed = rng.random(n) < std_normal_cdf(-0.9 + 0.4 * college + 0.2 * afqt)
    daycare = rng.random(n) < 0.35
    age_z = (mother_age - 24.0) / 3.0

    # income above the 75th percentile of a noisy latent score
    latent = 0.5 * afqt + 0.4 * college - 0.3 * nonwhite + 0.2 * age_z + rng.standard_normal(n)
    t = (latent > np.quantile(latent, 0.75)).astype(float)

    mu0 = (
        -2.0 + 4.0 * afqt + 2.0 * college + 1.5 * age_z - 2.0 * nonwhite
        + 0.05 * (birth_weight - 118.0) - 2.5 * premature + 1.0 * breastfed
    )
    tau = effect + 1.5 * afqt
    y = mu0 + t * tau + noise_sd * rng.standard_normal(n)

    lin_r = -0.55 * age_z + 0.5 * nonwhite - 0.5 * college
    r = rng.random(n) < std_normal_cdf(std_normal_quantile(missing_rate) * 1.2 + lin_r - np.mean(lin_r))
    X = np.column_stack([male, nonwhite, birth_weight, afqt, mother_age, college, breastfed, daycare, premature]).astype(float)
    return ObservationTable(
        X=X,
        y=y,
        t=np.where(r, np.nan, t),
        covariate_names=COVARIATES,
        outcome_name=OUTCOME,
        treatment_name=TREATMENT,
    )


def write_standin(path, **kw) -> ObservationTable:
    table = make_standin(**kw)
    write_csv(table, path)
    return table
