"""Run a simulation grid and print the coverage table.

    python3 scripts/run_grid.py scripts/configs/desk_grid.json --out out/desk --preset desk
    python3 scripts/run_grid.py scripts/configs/quadratic_grid.json --out out/full

Equivalent to ``omit simulate``; kept as a script so the grid can be edited
and re-run without touching the package.
"""

import sys

from omit.cli import main

if __name__ == "__main__":
    if len(sys.argv) < 2:
        sys.exit(__doc__)
    config, *rest = sys.argv[1:]
    sys.exit(main(["simulate", "--config", config, *rest]))
