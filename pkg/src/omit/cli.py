"""Command-line entry point: ``omit {simulate, analyze, check, probs, standin}``.

Exit codes: 0 success, 1 usage or validation error, 2 statistical-validity
breach (a failed theory check, or a simulation whose replicate exclusion rate
reaches the validity ceiling).
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import jsonschema

from . import __version__
from .analysis import ANALYZE_METHODS, analyze, binary_columns, build_plan, compare_probabilities
from .data import SchemaError, load_csv, standardize_columns, write_completed
from .imputation import materialize
from .simulation import METHODS, ConfigError, ScenarioConfig, expand_grid, run_scenario, summarize_grid

log = logging.getLogger("omit")

SCHEMA_DIR = Path(__file__).with_name("schemas")
PRESETS = {
    "paper": {"replicates": 500, "methods": list(METHODS)},
    "desk": {"replicates": 200, "methods": ["OMIT_Correct", "OMIT_lm", "NaiveMI", "CC"]},
}
CHECKS = ("theorem1", "prop1-homog", "prop1-mcar", "bias-identities", "all")


class UsageError(Exception):
    pass


def load_schema(name: str) -> dict:
    with open(SCHEMA_DIR / f"{name}.schema.json", encoding="utf-8") as fh:
        return json.load(fh)


def _digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def write_manifest(out: Path, command: str, inputs: dict, seed: int, started: str, outputs: list[str]) -> None:
    write_json(
        out / "manifest.json",
        {
            "command": command,
            "config_digest": _digest(inputs),
            "seed": seed,
            "tool_version": __version__,
            "started": started,
            "finished": _now(),
            "outputs": sorted(outputs),
        },
    )


# -- simulate ---------------------------------------------------------------


def read_sim_config(path: str) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    errors = sorted(jsonschema.Draft202012Validator(load_schema("sim_config")).iter_errors(cfg), key=str)
    if errors:
        msgs = [f"{'/'.join(str(p) for p in e.absolute_path) or '<root>'}: {e.message}" for e in errors]
        raise UsageError(f"{path}: invalid config\n  " + "\n  ".join(msgs))
    return cfg


def build_configs(cfg: dict, seed: int | None, preset: str | None) -> list[ScenarioConfig]:
    base = {k: cfg[k] for k in ("n", "d", "rho", "M", "variant", "level", "gamma", "beta_t2", "beta_r2") if k in cfg}
    base["replicates"] = cfg.get("replicates", 500)
    base["methods"] = tuple(cfg.get("methods", METHODS))
    if preset:
        base["replicates"] = PRESETS[preset]["replicates"]
        if "methods" not in cfg:
            base["methods"] = tuple(PRESETS[preset]["methods"])
    base["seed"] = cfg.get("seed", 0) if seed is None else seed
    grid = cfg["grid"]
    try:
        template = ScenarioConfig(**base)
        return expand_grid(template, grid["beta_y"], grid["sigma"], grid["miss"])
    except ConfigError as exc:
        raise UsageError(str(exc)) from None


def cmd_simulate(args) -> int:
    started = _now()
    cfg = read_sim_config(args.config)
    configs = build_configs(cfg, args.seed, args.preset)
    out = Path(args.out)
    results = []
    for c in configs:
        log.info("scenario %s: %d replicates", c.scenario_id, c.replicates)
        results.append(run_scenario(c))
    tables = summarize_grid(results, out)
    write_manifest(
        out, "simulate",
        {"config": cfg, "preset": args.preset, "seed": configs[0].seed if configs else args.seed},
        configs[0].seed if configs else (args.seed or 0), started, tables["paths"],
    )
    bad = [r.scenario_id for r in results if not r.valid]
    for row in tables["coverage"]:
        print(f"{row['scenario_id']:<28} {row['method']:<13} bias={row['mean_bias']:+.3f} "
              f"mse={row['mse']:.3f} coverage={row['coverage']:.3f}")
    if bad:
        print(f"validity ceiling breached (>= 1% replicates excluded) in: {', '.join(bad)}", file=sys.stderr)
        return 2
    return 0


# -- analyze / probs --------------------------------------------------------


def load_table(args):
    covs = [c.strip() for c in args.covariates.split(",") if c.strip()]
    try:
        table = load_csv(args.data, args.outcome, args.treatment, covs)
    except (SchemaError, OSError) as exc:
        raise UsageError(str(exc)) from None
    if not args.no_standardize:
        numeric = [n for n, b in zip(table.covariate_names, binary_columns(table.X)) if not b]
        if numeric:
            try:
                table, _ = standardize_columns(table, numeric)
            except ValueError as exc:
                raise UsageError(str(exc)) from None
    return table


def _table_inputs(args) -> dict:
    data = Path(args.data).read_bytes()
    return {"data_sha256": hashlib.sha256(data).hexdigest(),
            **{k: v for k, v in vars(args).items() if k not in ("func", "out", "data")}}


def cmd_analyze(args) -> int:
    started = _now()
    if not 0.0 < args.level < 1.0:
        raise UsageError("level must be in (0,1)")
    table = load_table(args)
    try:
        table.require_both_arms()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    report = analyze(table, args.method, args.m, args.seed, args.level, args.refit_ps_per_imputation)
    for note in report.notices:
        print(f"notice: {note}", file=sys.stderr)
    payload = report.to_dict()
    print(json.dumps(payload, indent=2))
    if args.out:
        out = Path(args.out)
        outputs = [out / "analysis.json"]
        write_json(outputs[0], payload)
        if args.write_completed and args.method != "cc" and table.n_missing:
            plan = build_plan(table, args.method, args.m, args.seed)
            for ds in materialize(plan, table):
                path = out / "completed" / f"completed_{ds.imputation_index:03d}.csv"
                path.parent.mkdir(parents=True, exist_ok=True)
                write_completed(ds, path)
                outputs.append(path)
        write_manifest(out, "analyze", _table_inputs(args), args.seed, started, [str(p) for p in outputs])
    return 0


def cmd_probs(args) -> int:
    started = _now()
    table = load_table(args)
    try:
        table.require_both_arms()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    cmp = compare_probabilities(table, args.method, args.threshold, flat_outcome=args.flat_outcome)
    payload = {"method": args.method, "compare": args.compare, **cmp.to_dict()}
    if cmp.n_compared == 0:
        print(f"notice: no missing unit has an outcome-assisted probability above {args.threshold}", file=sys.stderr)
    print(json.dumps(payload, indent=2))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "probabilities.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["unit", "q_omit", "q_naive", "y"])
        for i, qo, qn, y in zip(cmp.units, cmp.q_omit, cmp.q_naive, cmp.y):
            w.writerow([int(i), repr(float(qo)), repr(float(qn)), repr(float(y))])
    write_json(out / "probs.json", payload)
    write_manifest(out, "probs", _table_inputs(args), 0, started,
                   [str(out / "probabilities.csv"), str(out / "probs.json")])
    return 0


# -- check ------------------------------------------------------------------


def run_checks(which: str, seed: int, replicates: int | None, inject_heterogeneity: bool = False) -> list:
    from . import theory

    reports = []
    if which in ("bias-identities", "all"):
        reports += theory.verify_bias_identities(seed)
    if which in ("theorem1", "all"):
        cfg = theory.theorem1_config(seed)
        R = replicates or 2000
        reports.append(theory.verify_theorem1(cfg, R, "OMIT"))
        reports.append(theory.verify_theorem1(cfg, R, "Naive"))
    if which in ("prop1-homog", "all"):
        reports.append(theory.verify_proposition1("homogeneous", replicates or 500, seed, inject_heterogeneity))
    if which in ("prop1-mcar", "all"):
        reports.append(theory.verify_proposition1("mcar", replicates or 500, seed, inject_heterogeneity))
    return reports


def cmd_check(args) -> int:
    started = _now()
    reports = run_checks(args.which, args.seed, args.replicates, args.inject_heterogeneity)
    payload = [r.to_dict() for r in reports]
    for r in payload:
        z = r["standardized"]
        print(f"{'PASS' if r['pass'] else 'FAIL'}  {r['check']:<36} mean={r['mean']:.3e} "
              f"se={r['mc_se']:.3e} z={z if z is None else format(z, '.2f')}")
    if args.out:
        out = Path(args.out)
        write_json(out / "checks.json", payload)
        write_manifest(out, "check", {k: v for k, v in vars(args).items() if k not in ("func", "out")},
                       args.seed, started, [str(out / "checks.json")])
    return 0 if all(r["pass"] for r in payload) else 2


def cmd_standin(args) -> int:
    from .standin import write_standin

    table = write_standin(args.out, n=args.n, seed=args.seed)
    print(f"wrote {args.out}: n={table.n}, missing treatments={table.n_missing}")
    return 0


# -- parser -----------------------------------------------------------------


def _level(s: str) -> float:
    v = float(s)
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError("level must be in (0,1)")
    return v


def _data_args(p):
    p.add_argument("--data", required=True, help="CSV with a header row")
    p.add_argument("--outcome", required=True)
    p.add_argument("--treatment", required=True)
    p.add_argument("--covariates", required=True, help="comma-separated column names")
    p.add_argument("--no-standardize", action="store_true",
                   help="keep numeric covariates on their original scale")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="omit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a simulation grid from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="estimate the ATE on a CSV with missing treatments")
    _data_args(p)
    p.add_argument("--method", choices=ANALYZE_METHODS, default="omit-lm")
    p.add_argument("--m", type=int, default=20, help="number of imputations")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--level", type=_level, default=0.95)
    p.add_argument("--refit-ps-per-imputation", action="store_true")
    p.add_argument("--out", help="directory for analysis.json and manifest.json")
    p.add_argument("--write-completed", action="store_true",
                   help="also export each completed dataset under OUT/completed/")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("check", help="Monte Carlo and algebraic checks of the bias results")
    p.add_argument("--which", choices=CHECKS, default="all")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--replicates", type=int)
    p.add_argument("--out")
    p.add_argument("--inject-heterogeneity", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("probs", help="compare outcome-assisted and propensity-only imputation probabilities")
    _data_args(p)
    p.add_argument("--method", choices=("omit-lm", "omit-flex"), default="omit-lm")
    p.add_argument("--compare", choices=("naive",), default="naive")
    p.add_argument("--threshold", type=float, default=0.25)
    p.add_argument("--out", required=True)
    p.add_argument("--flat-outcome", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_probs)

    p = sub.add_parser("standin", help="write the synthetic NLSY-style stand-in CSV")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=2189)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_standin)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors; keep 2 for validity breaches
        return 0 if exc.code == 0 else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
