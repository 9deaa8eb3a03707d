"""Certificates for both output types, plus SDPA exports for external solvers.

The Dirichlet problem is exported at N = 2 and the Neumann problem at
N = 4, the orders a general-purpose SDP solver is expected to accept.
"""

import argparse
import sys
from pathlib import Path

from delaypde import cli

ROOT = Path(__file__).resolve().parents[1]
RUNS = (("dirichlet", "dirichlet_example.ini", 2), ("neumann", "neumann_example.ini", 4))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(ROOT / "out" / "certify"))
    args = ap.parse_args()
    worst = 0
    for name, cfg, n_export in RUNS:
        print(f"== {name}")
        code = cli.main(["certify", "--config", str(ROOT / "configs" / cfg),
                         "--out", str(Path(args.out) / name), "--export-sdpa", str(n_export)])
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    sys.exit(main())
