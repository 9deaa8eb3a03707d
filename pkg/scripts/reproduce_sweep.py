"""Decay rate against the delay for h in {0.5, 1, 2, 5, 10}.

Runs the sweep configuration, prints the fitted rates and checks that
they decrease strictly, with every gap larger than the summed rate
residuals of the two fits.
"""

import argparse
import csv
import sys
from pathlib import Path

from delaypde import cli

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(ROOT / "configs" / "delay_sweep.ini"))
    ap.add_argument("--out", default=str(ROOT / "out" / "sweep"))
    args = ap.parse_args()
    code = cli.main(["sweep", "--config", args.config, "--out", args.out])
    if code != 0:
        return code
    with open(Path(args.out) / "decay_rates.csv") as fh:
        rows = sorted(csv.DictReader(fh), key=lambda r: float(r["h"]))
    ok = True
    for a, b in zip(rows, rows[1:]):
        gap = float(a["delta_hat"]) - float(b["delta_hat"])
        res = float(a["rate_residual"]) + float(b["rate_residual"])
        ok &= gap > res
        print(f"h {a['h']} -> {b['h']}: gap {gap:.4g}, residual sum {res:.3g}")
    print("monotone with margin:", "yes" if ok else "no")
    return 0 if ok else 2


if __name__ == "__main__":
    sys.exit(main())
