"""Write the synthetic NLSY-style stand-in and analyze it with every method.

    python3 scripts/make_standin.py [--out out/standin]
"""

import argparse
from pathlib import Path

from omit.analysis import ANALYZE_METHODS, analyze, compare_probabilities
from omit.data import standardize_columns
from omit.standin import write_standin

parser = argparse.ArgumentParser()
parser.add_argument("--out", default="out/standin")
parser.add_argument("--seed", type=int, default=0)
args = parser.parse_args()

out = Path(args.out)
out.mkdir(parents=True, exist_ok=True)
table = write_standin(out / "standin.csv", seed=args.seed)
table, _ = standardize_columns(table, ["birth_weight", "mother_afqt", "mother_age"])
print(f"n = {table.n}, missing treatments = {table.n_missing}")
for m in ANALYZE_METHODS:
    r = analyze(table, m, M=20, seed=args.seed)
    print(f"{m:<10} ate = {r.ate:7.3f}  se = {r.std_error:6.3f}  ci = ({r.ci[0]:.2f}, {r.ci[1]:.2f})")
for m in ("omit-lm", "omit-flex"):
    c = compare_probabilities(table, m)
    print(f"{m}: {c.n_compared} units with q > 0.25, share above the propensity score {c.fraction_omit_higher:.3f}")
