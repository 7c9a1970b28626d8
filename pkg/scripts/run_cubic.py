"""Cubic-outcome variant: does Naive+Y lose to the outcome-assisted methods?

    python3 scripts/run_cubic.py [--replicates 200] [--out out/cubic]
"""

import argparse
from pathlib import Path

from omit.simulation import METHODS, ScenarioConfig, run_scenario, summarize_grid

parser = argparse.ArgumentParser()
parser.add_argument("--replicates", type=int, default=200)
parser.add_argument("--seed", type=int, default=0)
parser.add_argument("--out", default="out/cubic")
args = parser.parse_args()

cfg = ScenarioConfig(beta_y=4.0, sigma=1.0, miss_level=0.3, variant="cubic",
                     replicates=args.replicates, methods=METHODS, seed=args.seed)
res = run_scenario(cfg)
summarize_grid([res], Path(args.out))
print(f"{cfg.scenario_id}: tau_fp = {res.tau_fp:.4f}")
print(f"{'method':<13} {'mean|bias|':>10} {'|mean bias|':>11} {'coverage':>9}")
for m, s in res.summaries().items():
    print(f"{m:<13} {s['mean_abs_bias']:>10.4f} {abs(s['mean_bias']):>11.4f} {s['coverage']:>9.3f}")
