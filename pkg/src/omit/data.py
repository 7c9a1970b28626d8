"""In-memory causal dataset with missing treatments, and CSV I/O."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

NA_TOKENS = frozenset({"", "na", "nan"})


class SchemaError(ValueError):
    """Raised when a CSV does not fit the requested column roles."""


@dataclass(frozen=True)
class ObservationTable:
    """n units with covariates ``X``, outcome ``y``, treatment ``t`` and missingness ``r``.

    ``t`` is stored as floats with NaN where the treatment is absent; ``r[i] == 1``
    exactly when ``t[i]`` is NaN.
    """

    X: np.ndarray
    y: np.ndarray
    t: np.ndarray
    covariate_names: tuple[str, ...] = ()
    outcome_name: str = "y"
    treatment_name: str = "t"
    r: np.ndarray = field(init=False)

    def __post_init__(self):
        X = np.array(self.X, dtype=float, ndmin=2)
        y = np.array(self.y, dtype=float).reshape(-1)
        t = np.array(self.t, dtype=float).reshape(-1)
        n = y.shape[0]
        if n < 1:
            raise ValueError("table needs at least one unit")
        if X.shape[0] != n or t.shape[0] != n:
            raise ValueError(f"length mismatch: X has {X.shape[0]} rows, y {n}, t {t.shape[0]}")
        if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
            raise ValueError("covariates and outcomes must be completely observed")
        obs = ~np.isnan(t)
        if np.any((t[obs] != 0.0) & (t[obs] != 1.0)):
            raise ValueError("observed treatments must be 0 or 1")
        names = tuple(self.covariate_names) or tuple(f"x{j + 1}" for j in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise ValueError("covariate_names does not match the number of columns")
        for a in (X, y, t):
            a.setflags(write=False)
        r = (~obs).astype(np.int8)
        r.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "covariate_names", names)
        object.__setattr__(self, "r", r)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def observed(self) -> np.ndarray:
        return self.r == 0

    @property
    def missing(self) -> np.ndarray:
        return self.r == 1

    @property
    def n_obs(self) -> int:
        return int(np.count_nonzero(self.r == 0))

    @property
    def n_missing(self) -> int:
        return self.n - self.n_obs

    def require_both_arms(self) -> None:
        tobs = self.t[self.observed]
        if not (np.any(tobs == 1.0) and np.any(tobs == 0.0)):
            raise ValueError("need at least one observed treated and one observed control unit")

    def complete_case_view(self) -> "ObservationTable":
        keep = self.observed
        return self.replace(X=self.X[keep], y=self.y[keep], t=self.t[keep])

    def replace(self, **changes) -> "ObservationTable":
        kw = dict(
            X=self.X,
            y=self.y,
            t=self.t,
            covariate_names=self.covariate_names,
            outcome_name=self.outcome_name,
            treatment_name=self.treatment_name,
        )
        kw.update(changes)
        return ObservationTable(**kw)


@dataclass(frozen=True)
class CompletedDataset:
    base: ObservationTable
    t_star: np.ndarray
    imputation_index: int

    def __post_init__(self):
        ts = np.asarray(self.t_star)
        if ts.shape != (self.base.n,):
            raise ValueError("t_star has the wrong length")
        obs = self.base.observed
        if np.any(ts[obs] != self.base.t[obs]):
            raise ValueError("t_star must equal the observed treatment where r = 0")


@dataclass(frozen=True)
class PotentialOutcomeTable:
    y1: np.ndarray
    y0: np.ndarray

    @property
    def tau(self) -> np.ndarray:
        return self.y1 - self.y0

    @property
    def tau_fp(self) -> float:
        return float(np.mean(self.y1 - self.y0))


def _parse_float(cell: str, row: int, col: str) -> float:
    try:
        v = float(cell)
    except ValueError:
        raise SchemaError(f"row {row}, column {col!r}: cannot parse {cell!r} as a number") from None
    return v


def load_csv(
    path,
    outcome: str,
    treatment: str,
    covariates: Sequence[str],
) -> ObservationTable:
    """Read a header-row CSV into an ObservationTable.

    Treatment cells must be ``0``, ``1`` or an NA token (empty, ``NA``, ``nan``,
    any case). Outcome and covariate cells must all be present. Row numbers in
    error messages count the header as row 1.
    """
    covariates = list(covariates)
    if not covariates:
        raise SchemaError("at least one covariate column is required")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        for col in [outcome, treatment, *covariates]:
            if col not in header:
                raise SchemaError(f"unknown column {col!r}")
        io, it = header.index(outcome), header.index(treatment)
        ix = [header.index(c) for c in covariates]
        X, y, t = [], [], []
        for rownum, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise SchemaError(f"row {rownum}: expected {len(header)} fields, got {len(rec)}")
            for j, name in [(io, outcome), *zip(ix, covariates)]:
                if rec[j].strip().lower() in NA_TOKENS:
                    raise SchemaError(
                        f"row {rownum}, column {name!r}: missing value (only treatments may be missing)"
                    )
            y.append(_parse_float(rec[io], rownum, outcome))
            X.append([_parse_float(rec[j], rownum, c) for j, c in zip(ix, covariates)])
            cell = rec[it].strip()
            if cell.lower() in NA_TOKENS:
                t.append(math.nan)
            elif cell in ("0", "1", "0.0", "1.0"):
                t.append(float(cell))
            else:
                raise SchemaError(f"row {rownum}, column {treatment!r}: treatment must be 0, 1 or empty, got {cell!r}")
    if not y:
        raise SchemaError(f"{path}: no data rows")
    if all(math.isnan(v) for v in t):
        raise SchemaError("all treatments are missing")
    for v, name in [(y, outcome)]:
        if not np.all(np.isfinite(v)):
            raise SchemaError(f"column {name!r} has non-finite values")
    Xa = np.asarray(X, dtype=float)
    if not np.all(np.isfinite(Xa)):
        raise SchemaError("covariates have non-finite values")
    return ObservationTable(
        X=Xa,
        y=np.asarray(y),
        t=np.asarray(t),
        covariate_names=tuple(covariates),
        outcome_name=outcome,
        treatment_name=treatment,
    )


def write_csv(table: ObservationTable, path, extra: dict[str, Iterable] | None = None) -> None:
    """Write a table with ``repr``-exact floats; missing treatments are left empty."""
    extra = extra or {}
    cols = [table.outcome_name, table.treatment_name, *table.covariate_names, *extra]
    extra_vals = [list(v) for v in extra.values()]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for i in range(table.n):
            ti = table.t[i]
            row = [repr(float(table.y[i])), "" if math.isnan(ti) else str(int(ti))]
            row += [repr(float(v)) for v in table.X[i]]
            row += [v[i] for v in extra_vals]
            w.writerow(row)


def write_completed(ds: CompletedDataset, path) -> None:
    """Export one completed dataset with ``t_star`` and ``imputed`` columns."""
    write_csv(
        ds.base,
        path,
        extra={
            "t_star": (int(v) for v in ds.t_star),
            "imputed": (int(v) for v in ds.base.r),
        },
    )


def standardize(values, name: str = "column") -> tuple[np.ndarray, float, float]:
    """Center and scale to sample sd 1 (n - 1 denominator)."""
    v = np.asarray(values, dtype=float)
    mean = float(np.mean(v))
    sd = float(np.std(v, ddof=1)) if v.size > 1 else 0.0
    if not sd > 0:
        raise ValueError(f"constant column {name!r} cannot be standardized")
    return (v - mean) / sd, mean, sd


def destandardize(z, mean: float, sd: float) -> np.ndarray:
    return np.asarray(z, dtype=float) * sd + mean


def standardize_columns(
    table: ObservationTable, which: Sequence[str | int] | str = "covariates"
) -> tuple[ObservationTable, dict[str, tuple[float, float]]]:
    """Standardize selected covariates (by name or index) and/or the outcome.

    ``which`` may be ``"covariates"`` (all covariate columns), ``"outcome"``, or
    a list mixing covariate names, indices and the outcome name.
    """
    if which == "covariates":
        sel: list = list(table.covariate_names)
    elif which == "outcome":
        sel = [table.outcome_name]
    else:
        sel = list(which)
    X = table.X.copy()
    y = table.y
    params: dict[str, tuple[float, float]] = {}
    for key in sel:
        if key == table.outcome_name:
            y, m, s = standardize(y, key)
            params[key] = (m, s)
            continue
        j = key if isinstance(key, int) else table.covariate_names.index(key)
        name = table.covariate_names[j]
        X[:, j], m, s = standardize(X[:, j], name)
        params[name] = (m, s)
    return table.replace(X=X, y=y), params
