"""Coefficient norms of isotropic and lag-adapted ridge along a penalty grid on the two-variable VAR(2)."""

import argparse

import numpy as np

from ridgevar.estimators import PenaltyMatrix, pseudo_model_selection_limit, shrinkage_norms
from ridgevar.var_core import build_regression, benchmark_var2, simulate


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--T", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    data = build_regression(simulate(benchmark_var2(), args.T + 2, seed=args.seed, allow_unstable=True), 2)
    grid = np.logspace(-2, 6, 9)
    iso = shrinkage_norms(data, grid)
    lag = shrinkage_norms(data, grid, lambda lam: PenaltyMatrix.lag_adapted([0.0, lam], data.K))
    subset = pseudo_model_selection_limit(data, [1])

    print("lambda,iso_total,iso_A1,iso_A2,lag_total,lag_A1,lag_A2")
    for n, lam in enumerate(grid):
        row = [lam, iso.total[n], *iso.lag_blocks[n], lag.total[n], *lag.lag_blocks[n]]
        print(",".join(f"{v:.6g}" for v in row))
    print(f"# subset LS (lag 1 only) ||A1|| = {np.linalg.norm(subset.coeffs[0]):.6g}")


if __name__ == "__main__":
    main()
