"""Solve an exported SDPA feasibility problem with cvxpy (optional tool).

cvxpy is not a dependency of the package; install it separately
(``pip install cvxpy``).  The file is read with the package's own reader,
so this checks the exported data, not the writer's formatting alone.

    python scripts/check_sdpa_cvxpy.py out/certify/dirichlet/certify_N2.dat-s
"""

import argparse
import sys

import numpy as np

from delaypde.certify import read_sdpa


def block_matrices(sd):
    """Dense ``F_0..F_m`` per block (diagonal blocks as full matrices)."""
    dims = [abs(s) for s in sd.block_sizes]
    F = [[np.zeros((d, d)) for d in dims] for _ in range(sd.m + 1)]
    for mat, blk, i, j, val in sd.entries:
        B = F[mat][blk - 1]
        B[i - 1, j - 1] = val
        B[j - 1, i - 1] = val
    return F


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("path")
    args = ap.parse_args()
    try:
        import cvxpy as cp
    except ImportError:
        print("cvxpy is not installed; pip install cvxpy", file=sys.stderr)
        return 1
    sd = read_sdpa(args.path)
    F = block_matrices(sd)
    x = cp.Variable(sd.m)
    cons = []
    for b in range(len(sd.block_sizes)):
        if F[0][b].shape[0] == 0:
            continue
        expr = sum(x[i] * F[i + 1][b] for i in range(sd.m)) - F[0][b]
        cons.append((expr + expr.T) / 2 >> 0)
    prob = cp.Problem(cp.Minimize(0), cons)
    prob.solve()
    print(f"status: {prob.status}")
    if x.value is not None:
        print("smallest block eigenvalues:", ", ".join(f"{v:.3g}" for v in sd.min_eigs(x.value)))
    return 0 if prob.status in ("optimal", "optimal_inaccurate") else 3


if __name__ == "__main__":
    sys.exit(main())
