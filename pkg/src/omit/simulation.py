"""Monte Carlo study: finite populations, masking, all methods, summaries."""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .data import ObservationTable, PotentialOutcomeTable, standardize
from .estimation import ipw_complete_case, ipw_estimate_columns, pool, single_interval
from .imputation import draw_matrix, match_rate, plan_naive, plan_naive_plus_y, plan_omit
from .regression import (
    DesignSpec,
    SeparationError,
    SingularDesignError,
    fit_outcome_model,
    fit_probit,
    predict_propensity,
)
from .rng import mix_key, name_code, substream
from .special import std_normal_cdf, std_normal_quantile

METHODS = ("OMIT_Correct", "OMIT_lm", "OMIT_flex", "NaiveMI", "NaivePlusY", "CC")
VARIANTS = {"quadratic": 2, "cubic": 3}
VALIDITY_CEILING = 0.01
MODERATOR = 1  # x_2 drives treatment, missingness and effect heterogeneity


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    n: int = 1000
    d: int = 10
    rho: float = 0.4
    beta_y: float = 4.0
    sigma: float = 1.0
    miss_level: float = 0.3
    replicates: int = 500
    M: int = 20
    variant: str = "quadratic"
    methods: tuple[str, ...] = METHODS
    seed: int = 0
    treat_rate: float = 0.4
    beta_t2: float = 0.35
    beta_r2: float = 0.75
    gamma: float = 0.1
    level: float = 0.95

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(self.methods))
        self.validate()

    def validate(self) -> None:
        if self.d < 2:
            raise ConfigError("d must be at least 2")
        if self.rho >= 1.0 or self.rho <= -1.0 / (self.d - 1):
            raise ConfigError(f"correlation not positive definite (rho = {self.rho})")
        if self.rho < 0.0:
            raise ConfigError(f"rho must be in [0, 1), got {self.rho}")
        if self.n < 4 * self.d:
            raise ConfigError(f"n must be at least 4*d = {4 * self.d}")
        if not self.sigma > 0:
            raise ConfigError("sigma must be positive")
        if not 0.0 < self.miss_level < 1.0:
            raise ConfigError("miss_level must be in (0, 1)")
        if not 0.0 < self.treat_rate < 1.0:
            raise ConfigError("treat_rate must be in (0, 1)")
        if self.replicates < 1 or self.M < 2:
            raise ConfigError("need replicates >= 1 and M >= 2")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {sorted(VARIANTS)}")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown methods {bad}; choose from {list(METHODS)}")
        if not 0.0 < self.level < 1.0:
            raise ConfigError("level must be in (0,1)")

    @property
    def power(self) -> int:
        return VARIANTS[self.variant]

    @property
    def alpha_t(self) -> float:
        return std_normal_quantile(self.treat_rate)

    @property
    def alpha_r(self) -> float:
        return std_normal_quantile(self.miss_level)

    @property
    def scenario_id(self) -> str:
        return f"{self.variant}_by{self.beta_y:g}_s{self.sigma:g}_m{round(self.miss_level * 100):d}"

    def keys(self) -> dict:
        return {"variant": self.variant, "beta_y": self.beta_y, "sigma": self.sigma, "miss": self.miss_level}


@dataclass(frozen=True)
class Population:
    X: np.ndarray
    outcomes: PotentialOutcomeTable

    @property
    def tau_fp(self) -> float:
        return self.outcomes.tau_fp

    def digest(self) -> str:
        import hashlib

        h = hashlib.sha256()
        for a in (self.X, self.outcomes.y1, self.outcomes.y0):
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()


def exchangeable_cholesky(d: int, rho: float) -> np.ndarray:
    if rho >= 1.0 or rho <= -1.0 / (d - 1):
        raise ConfigError(f"correlation not positive definite (rho = {rho})")
    S = (1.0 - rho) * np.eye(d) + rho * np.ones((d, d))
    return np.linalg.cholesky(S)


def outcome_means(X, beta_y: float, power: int) -> tuple[np.ndarray, np.ndarray]:
    """Means of y | x, t=1 and y | x, t=0."""
    x1, x2k = X[:, 0], X[:, MODERATOR] ** power
    return 2.0 + x1 + beta_y * x2k, 1.0 + x1 + x2k


def generate_covariates(config: ScenarioConfig) -> np.ndarray:
    L = exchangeable_cholesky(config.d, config.rho)
    Z = substream(config.seed, "covariates", config.n, config.d).standard_normal((config.n, config.d))
    return Z @ L.T


def draw_potential_outcomes(X, config: ScenarioConfig, rng: np.random.Generator) -> PotentialOutcomeTable:
    """Both potential outcomes share one noise draw, so y1 - y0 = mu1 - mu0."""
    mu1, mu0 = outcome_means(X, config.beta_y, config.power)
    eps = config.sigma * rng.standard_normal(X.shape[0])
    return PotentialOutcomeTable(y1=mu1 + eps, y0=mu0 + eps)


def generate_population(config: ScenarioConfig) -> Population:
    """Covariates and potential outcomes, fixed for every replicate of a scenario.

    Covariates and outcome noise use common random numbers across scenarios
    that share ``(seed, n, d)``.
    """
    X = generate_covariates(config)
    rng = substream(config.seed, "outcome-noise", config.n)
    return Population(X, draw_potential_outcomes(X, config, rng))


def true_propensity(X, config: ScenarioConfig) -> np.ndarray:
    return std_normal_cdf(config.alpha_t + config.beta_t2 * X[:, MODERATOR])


def missingness_probability(X, y_tilde, config: ScenarioConfig) -> np.ndarray:
    return std_normal_cdf(config.alpha_r + config.beta_r2 * X[:, MODERATOR] + config.gamma * y_tilde)


@dataclass(frozen=True)
class Replicate:
    table: ObservationTable
    t_true: np.ndarray
    e_true: np.ndarray
    p_true: np.ndarray
    index: int


def assign_and_mask(population: Population, config: ScenarioConfig, replicate_index: int) -> Replicate:
    """Draw treatments, realize outcomes, then hide treatments via the MAR model.

    The uniforms behind ``t`` and ``r`` depend only on (seed, replicate), so
    for a fixed seed a larger missingness level hides a superset of units.
    """
    if not 0 <= replicate_index < config.replicates:
        raise IndexError("replicate_index out of range")
    X = population.X
    n = X.shape[0]
    e = true_propensity(X, config)
    u_t = substream(config.seed, "assign", replicate_index).random(n)
    t = (u_t < e).astype(float)
    po = population.outcomes
    y = t * po.y1 + (1.0 - t) * po.y0
    y_tilde, _, _ = standardize(y, "y")
    p = missingness_probability(X, y_tilde, config)
    u_r = substream(config.seed, "mask", replicate_index).random(n)
    r = u_r < p
    t_obs = np.where(r, np.nan, t)
    table = ObservationTable(X=X, y=y, t=t_obs)
    return Replicate(table, t, e, p, replicate_index)


def outcome_spec(method: str, config: ScenarioConfig) -> DesignSpec:
    if method == "OMIT_Correct":
        return DesignSpec.correct(config.power, 0, MODERATOR)
    if method == "OMIT_lm":
        return DesignSpec.interaction(config.d)
    if method == "OMIT_flex":
        return DesignSpec.flexible(config.d)
    raise ValueError(method)


FIT_ERRORS = (SeparationError, SingularDesignError, ValueError, np.linalg.LinAlgError)


@dataclass
class ReplicateOutcome:
    index: int
    missing_rate: float
    estimates: dict = field(default_factory=dict)  # method -> (tau_hat, lo, hi)
    match_rates: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)  # method -> message


def analyze_replicate(rep: Replicate, config: ScenarioConfig) -> ReplicateOutcome:
    table = rep.table
    out = ReplicateOutcome(rep.index, float(table.r.mean()))
    obs = table.observed
    try:
        ps = fit_probit(table.X[obs], table.t[obs], predictor_columns=(MODERATOR,))
        e_hat = predict_propensity(ps, table.X)
    except FIT_ERRORS as exc:
        for m in config.methods:
            out.failures[m] = f"propensity fit: {exc}"
        return out

    sid = name_code(config.scenario_id)
    for method in config.methods:
        try:
            if method == "CC":
                est = ipw_complete_case(table, e_hat)
                lo, hi = single_interval(est, config.level)
                out.estimates[method] = (est.tau_hat, lo, hi)
                continue
            seed = mix_key(config.seed, sid, rep.index, name_code(method))
            if method == "NaiveMI":
                plan = plan_naive(table, ps, config.M, seed)
            elif method == "NaivePlusY":
                plan = plan_naive_plus_y(table, config.M, seed)
            else:
                spec = outcome_spec(method, config)
                ym = fit_outcome_model(table.X[obs], table.y[obs], table.t[obs], spec)
                plan = plan_omit(table, ps, ym, config.M, seed)
            T = draw_matrix(plan)
            taus, us = ipw_estimate_columns(table.y, T, e_hat)
            pe = pool(list(zip(taus, us)), config.level)
            out.estimates[method] = (pe.tau_bar, pe.ci_low, pe.ci_high)
            out.match_rates[method] = match_rate(T, rep.t_true, table.missing)
        except FIT_ERRORS as exc:
            out.failures[method] = str(exc)
    return out


@dataclass
class MethodResult:
    tau_hat: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    covered: np.ndarray
    excluded: int
    match_rate: float

    def summary(self, tau_fp: float) -> dict:
        ok = ~np.isnan(self.tau_hat)
        diff = self.tau_hat[ok] - tau_fp
        return {
            "mean_bias": float(diff.mean()) if diff.size else math.nan,
            "mean_abs_bias": float(np.abs(diff).mean()) if diff.size else math.nan,
            "mse": float(np.mean(diff**2)) if diff.size else math.nan,
            "coverage": float(self.covered[ok].mean()) if diff.size else math.nan,
            "n_valid": int(ok.sum()),
            "excluded": int(self.excluded),
            "match_rate": self.match_rate,
        }


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    tau_fp: float
    population_digest: str
    methods: dict
    missing_rates: np.ndarray
    failures: list

    @property
    def scenario_id(self) -> str:
        return self.config.scenario_id

    def summaries(self) -> dict:
        return {m: r.summary(self.tau_fp) for m, r in self.methods.items()}

    def exclusion_rate(self) -> float:
        if not self.methods:
            return 0.0
        return max(r.excluded for r in self.methods.values()) / self.config.replicates

    @property
    def valid(self) -> bool:
        return self.exclusion_rate() < VALIDITY_CEILING

    def diagnostics(self) -> dict:
        return {
            "scenario_id": self.scenario_id,
            "config": config_to_dict(self.config),
            "tau_fp": self.tau_fp,
            "population_sha256": self.population_digest,
            "missing_rate_mean": float(np.mean(self.missing_rates)),
            "missing_rate_min": float(np.min(self.missing_rates)),
            "missing_rate_max": float(np.max(self.missing_rates)),
            "exclusion_rate": self.exclusion_rate(),
            "valid": self.valid,
            "summaries": self.summaries(),
            "failures": self.failures[:50],
        }


def config_to_dict(config: ScenarioConfig) -> dict:
    d = asdict(config)
    d["methods"] = list(config.methods)
    return d


def _run_chunk(args):
    config, population, indices = args
    return [analyze_replicate(assign_and_mask(population, config, i), config) for i in indices]


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("OMIT_THREADS", "1")))
    except ValueError:
        return 1


def run_scenario(config: ScenarioConfig, workers: int | None = None, population: Population | None = None) -> ScenarioResult:
    population = population or generate_population(config)
    workers = default_workers() if workers is None else max(1, workers)
    idx = list(range(config.replicates))
    if workers == 1:
        outcomes = _run_chunk((config, population, idx))
    else:
        chunks = [idx[k::workers] for k in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = ex.map(_run_chunk, [(config, population, c) for c in chunks])
            outcomes = sorted((o for part in parts for o in part), key=lambda o: o.index)

    tau_fp = population.tau_fp
    R = config.replicates
    methods = {}
    failures = []
    for m in config.methods:
        est = np.full((R, 3), np.nan)
        mr = []
        for o in outcomes:
            if m in o.estimates:
                est[o.index] = o.estimates[m]
                if m in o.match_rates:
                    mr.append(o.match_rates[m])
            else:
                failures.append({"replicate": o.index, "method": m, "error": o.failures.get(m, "")})
        covered = (est[:, 1] <= tau_fp) & (tau_fp <= est[:, 2])
        methods[m] = MethodResult(
            tau_hat=est[:, 0],
            ci_low=est[:, 1],
            ci_high=est[:, 2],
            covered=covered,
            excluded=int(np.isnan(est[:, 0]).sum()),
            match_rate=float(np.mean(mr)) if mr else math.nan,
        )
    return ScenarioResult(
        config=config,
        tau_fp=tau_fp,
        population_digest=population.digest(),
        methods=methods,
        missing_rates=np.array([o.missing_rate for o in outcomes]),
        failures=failures,
    )


def expand_grid(base: ScenarioConfig, beta_y, sigma, miss) -> list[ScenarioConfig]:
    return [
        replace(base, beta_y=float(b), sigma=float(s), miss_level=float(p))
        for b in beta_y
        for s in sigma
        for p in miss
    ]


BIAS_FIELDS = ["scenario_id", "variant", "beta_y", "sigma", "miss", "method", "replicate", "tau_hat", "diff"]
COVERAGE_FIELDS = [
    "scenario_id", "variant", "beta_y", "sigma", "miss", "method",
    "tau_fp", "mean_bias", "mean_abs_bias", "mse", "coverage", "n_valid", "excluded", "match_rate",
]


def bias_rows(res: ScenarioResult) -> list[dict]:
    k = res.config.keys()
    rows = []
    for m, mr in res.methods.items():
        for i, v in enumerate(mr.tau_hat):
            if np.isnan(v):
                continue
            rows.append({"scenario_id": res.scenario_id, **k, "method": m, "replicate": i,
                         "tau_hat": float(v), "diff": float(v - res.tau_fp)})
    return rows


def coverage_rows(res: ScenarioResult) -> list[dict]:
    k = res.config.keys()
    return [
        {"scenario_id": res.scenario_id, **k, "method": m, "tau_fp": res.tau_fp, **s}
        for m, s in res.summaries().items()
    ]


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def write_rows(path: Path, fields: list[str], rows: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(v) for k, v in r.items()})


def naive_plus_y_rows(results) -> list[dict]:
    rows = []
    for res in results:
        if res.config.variant != "cubic" or "NaivePlusY" not in res.methods:
            continue
        s = res.summaries()
        ref = s["NaivePlusY"]["mean_abs_bias"]
        for m, v in s.items():
            rows.append({"scenario_id": res.scenario_id, **res.config.keys(), "method": m,
                         "mean_abs_bias": v["mean_abs_bias"], "mean_bias": v["mean_bias"],
                         "coverage": v["coverage"],
                         "naive_plus_y_worse": bool(ref > v["mean_abs_bias"]) if m != "NaivePlusY" else ""})
    return rows


def _json_clean(obj):
    # NaN and infinities have no JSON encoding
    if isinstance(obj, dict):
        return {k: _json_clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_clean(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def summarize_grid(results, out_dir) -> dict:
    """Write plot-ready CSVs and per-scenario diagnostics under ``out_dir``.

    Layout: ``<out>/bias.csv`` and ``<out>/coverage.csv`` for the whole grid,
    ``<out>/naive_plus_y.csv`` for cubic scenarios, and
    ``<out>/results/<scenario-id>/{bias.csv, coverage.csv, diagnostics.json}``.
    Returns the row tables.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    all_bias, all_cov = [], []
    paths = []
    for res in results:
        sdir = out / "results" / res.scenario_id
        b, c = bias_rows(res), coverage_rows(res)
        write_rows(sdir / "bias.csv", BIAS_FIELDS, b)
        write_rows(sdir / "coverage.csv", COVERAGE_FIELDS, c)
        with open(sdir / "diagnostics.json", "w", encoding="utf-8") as fh:
            json.dump(_json_clean(res.diagnostics()), fh, indent=2, sort_keys=True, allow_nan=False)
        paths += [sdir / "bias.csv", sdir / "coverage.csv", sdir / "diagnostics.json"]
        all_bias += b
        all_cov += c
    npy = naive_plus_y_rows(results)
    write_rows(out / "bias.csv", BIAS_FIELDS, all_bias)
    write_rows(out / "coverage.csv", COVERAGE_FIELDS, all_cov)
    paths += [out / "bias.csv", out / "coverage.csv"]
    if npy:
        write_rows(out / "naive_plus_y.csv", list(npy[0].keys()), npy)
        paths.append(out / "naive_plus_y.csv")
    return {"bias": all_bias, "coverage": all_cov, "naive_plus_y": npy, "paths": [str(p) for p in paths]}
